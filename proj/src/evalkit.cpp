#include "mlpo/evalkit.hpp"

#include <algorithm>

#include "mlpo/error.hpp"

namespace mlpo {

namespace {

std::vector<std::uint32_t> packed_trigrams(std::string_view s) {
  if (s.size() < kNgramOrder) {
    throw DataError("sequence of length " + std::to_string(s.size()) +
                    " is too short for 3-gram similarity");
  }
  std::vector<std::uint32_t> out;
  out.reserve(s.size() - 2);
  for (std::size_t i = 0; i + 3 <= s.size(); ++i) {
    out.push_back(static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << 16 |
                  static_cast<std::uint32_t>(static_cast<unsigned char>(s[i + 1])) << 8 |
                  static_cast<std::uint32_t>(static_cast<unsigned char>(s[i + 2])));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

double overlap(const std::vector<std::uint32_t>& a, const std::vector<std::uint32_t>& b) {
  std::size_t common = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++common;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(common) / static_cast<double>(a.size());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

std::set<std::string> ngram_set(std::string_view sequence, std::size_t n) {
  if (n == 0) throw UsageError("n-gram order must be positive");
  if (sequence.size() < n) {
    throw DataError("sequence of length " + std::to_string(sequence.size()) +
                    " is shorter than the n-gram order " + std::to_string(n));
  }
  std::set<std::string> out;
  for (std::size_t i = 0; i + n <= sequence.size(); ++i) out.emplace(sequence.substr(i, n));
  return out;
}

double sim(std::string_view a, std::string_view b) {
  return overlap(packed_trigrams(a), packed_trigrams(b));
}

NgramIndex::NgramIndex(std::span<const std::string> sequences) {
  sets_.reserve(sequences.size());
  for (const auto& s : sequences) sets_.push_back(packed_trigrams(s));
}

double NgramIndex::sim(std::size_t i, const NgramIndex& other, std::size_t j) const {
  return overlap(sets_.at(i), other.sets_.at(j));
}

DiversityReport diversity_report(std::span<const ProteinSequence> generated,
                                 std::span<const ProteinSequence> training) {
  if (generated.empty()) throw DataError("diversity_report: empty generated pool");
  if (training.empty()) throw DataError("diversity_report: empty training set");
  std::vector<std::string> gen, train;
  for (const auto& s : generated) gen.push_back(s.residues);
  for (const auto& s : training) train.push_back(s.residues);
  const NgramIndex g(gen);
  const NgramIndex t(train);

  DiversityReport r;
  r.generated_size = g.size();
  r.training_size = t.size();
  if (g.size() < 2) {
    r.inter_output = 0.0;
    r.inter_output_defined = false;
  } else {
    double total = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
      for (std::size_t j = 0; j < g.size(); ++j) {
        if (i != j) total += g.sim(i, g, j);
      }
    }
    r.inter_output = total / static_cast<double>(g.size() * (g.size() - 1));
  }
  double total = 0.0;
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (std::size_t j = 0; j < t.size(); ++j) total += g.sim(i, t, j);
  }
  r.training_set = total / static_cast<double>(g.size() * t.size());
  return r;
}

PoolSummary summarize(std::span<const ScoreRecord> records,
                      std::span<const QualityScore> quality) {
  if (records.empty()) throw DataError("summarize: empty pool");
  if (quality.size() != records.size()) throw DataError("summarize: quality scores not aligned");
  PoolSummary s;
  s.size = records.size();
  std::vector<double> energy, gamma, rho;
  std::map<std::string, std::vector<double>> tau, tau_raw;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (quality[i].id != records[i].id) throw DataError("summarize: quality scores not aligned");
    energy.push_back(records[i].energy);
    gamma.push_back(records[i].gamma);
    rho.push_back(quality[i].rho);
    for (const auto& [k, v] : records[i].tau) tau[k].push_back(v);
    for (const auto& [k, v] : records[i].tau_raw) tau_raw[k].push_back(v);
  }
  s.mean_energy = mean(energy);
  s.mean_gamma = mean(gamma);
  s.median_gamma = median(gamma);
  s.mean_rho = mean(rho);
  for (const auto& [k, v] : tau) {
    s.mean_tau[k] = mean(v);
    s.median_tau[k] = median(v);
  }
  for (const auto& [k, v] : tau_raw) s.mean_tau_raw[k] = mean(v);
  return s;
}

PoolSummary difference(const PoolSummary& a, const PoolSummary& b) {
  PoolSummary d;
  d.size = a.size;
  d.mean_energy = a.mean_energy - b.mean_energy;
  d.mean_gamma = a.mean_gamma - b.mean_gamma;
  d.median_gamma = a.median_gamma - b.median_gamma;
  d.mean_rho = a.mean_rho - b.mean_rho;
  auto sub = [](const std::map<std::string, double>& x, const std::map<std::string, double>& y) {
    std::map<std::string, double> out;
    for (const auto& [k, v] : x) out[k] = v - y.at(k);
    return out;
  };
  d.mean_tau = sub(a.mean_tau, b.mean_tau);
  d.median_tau = sub(a.median_tau, b.median_tau);
  d.mean_tau_raw = sub(a.mean_tau_raw, b.mean_tau_raw);
  return d;
}

QualityReport quality_report(std::span<const ProteinSequence> pool, const EnergyModel& energy,
                             const StructureEncoder& encoder,
                             const TrainingEmbeddingSets& training,
                             std::span<const ProteinSequence> baseline) {
  if (pool.size() < 2) {
    throw DataError("quality_report: pool of size " + std::to_string(pool.size()) +
                    " cannot be normalized");
  }
  QualityReport r;
  for (const auto& [name, _] : training) r.attributes.push_back(name);

  std::vector<ProteinSequence> all(pool.begin(), pool.end());
  all.insert(all.end(), baseline.begin(), baseline.end());
  const auto records = score_pool(all, energy, encoder, training);
  const auto quality = quality_scores(records, fit_pool(records, r.attributes));

  const auto split = static_cast<std::ptrdiff_t>(pool.size());
  r.pool_records.assign(records.begin(), records.begin() + split);
  r.pool_quality.assign(quality.begin(), quality.begin() + split);
  r.pool = summarize(r.pool_records, r.pool_quality);
  if (!baseline.empty()) {
    r.baseline_records.assign(records.begin() + split, records.end());
    r.baseline_quality.assign(quality.begin() + split, quality.end());
    r.baseline = summarize(r.baseline_records, r.baseline_quality);
    r.delta = difference(r.pool, *r.baseline);
  }
  return r;
}

}  // namespace mlpo
