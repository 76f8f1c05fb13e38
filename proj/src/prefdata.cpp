#include "mlpo/prefdata.hpp"

#include "mlpo/error.hpp"
#include "mlpo/rng.hpp"

namespace mlpo {

bool dominates(const ScoreRecord& winner, const ScoreRecord& loser,
               std::span<const std::string> attributes) {
  if (!(winner.gamma > loser.gamma)) return false;
  for (const auto& name : attributes) {
    const auto w = winner.tau.find(name);
    const auto l = loser.tau.find(name);
    if (w == winner.tau.end() || l == loser.tau.end()) {
      throw DataError("missing tau for attribute '" + name + "'");
    }
    if (!(w->second > l->second)) return false;
  }
  return true;
}

std::vector<std::pair<std::size_t, std::size_t>> valid_pairs(
    std::span<const ScoreRecord> records, std::span<const std::string> attributes) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    for (std::size_t j = 0; j < records.size(); ++j) {
      if (i != j && dominates(records[i], records[j], attributes)) out.emplace_back(i, j);
    }
  }
  return out;
}

PreferenceDataset build_pairs(std::span<const ScoreRecord> records,
                              std::span<const QualityScore> quality,
                              std::span<const std::string> attributes, std::size_t max_pairs,
                              std::uint64_t seed) {
  if (max_pairs == 0) throw UsageError("max_pairs must be >= 1");
  if (attributes.empty()) throw UsageError("build_pairs: no attributes");
  if (quality.size() != records.size()) {
    throw DataError("build_pairs: quality scores not aligned with records");
  }
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (quality[i].id != records[i].id) {
      throw DataError("build_pairs: quality score for '" + quality[i].id +
                      "' does not match record '" + records[i].id + "'");
    }
  }

  auto candidates = valid_pairs(records, attributes);
  if (candidates.empty()) throw DataError("no valid preference pairs in the scored pool");

  const std::size_t take = std::min(max_pairs, candidates.size());
  SplitMix64 rng(seed);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t j = i + rng.below(candidates.size() - i);
    std::swap(candidates[i], candidates[j]);
  }

  PreferenceDataset out;
  out.attributes.assign(attributes.begin(), attributes.end());
  out.seed = seed;
  out.max_pairs = max_pairs;
  out.valid_pair_count = candidates.size();
  out.pairs.reserve(take);
  for (std::size_t n = 0; n < take; ++n) {
    const auto [w, l] = candidates[n];
    PreferencePair p{records[w].id, records[l].id, quality[w].rho, quality[l].rho,
                     quality[w].rho - quality[l].rho};
    if (!(p.delta_rho > 0.0)) {
      throw DataError("dominant pair (" + p.winner + ", " + p.loser +
                      ") has non-positive quality gap");
    }
    out.pairs.push_back(std::move(p));
  }
  return out;
}

}  // namespace mlpo
