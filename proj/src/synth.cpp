#include "mlpo/synth.hpp"

#include <algorithm>
#include <cmath>

#include "mlpo/error.hpp"
#include "mlpo/rng.hpp"

namespace mlpo::synth {

SyntheticEnergyModel::SyntheticEnergyModel(std::uint64_t seed) : seed_(seed) {
  SplitMix64 rng(seed);
  for (auto& v : table_) v = 2.0 * rng.uniform() - 1.0;
}

double SyntheticEnergyModel::energy(std::string_view residues) const {
  if (residues.empty()) throw DataError("energy of empty sequence");
  double total = 0.0;
  for (std::size_t i = 0; i + 1 < residues.size(); ++i) {
    const int a = residue_index(residues[i]);
    const int b = residue_index(residues[i + 1]);
    if (a < 0 || b < 0) throw DataError("energy: invalid residue");
    total += table(a, b);
  }
  return total / static_cast<double>(residues.size());
}

double SyntheticEnergyModel::energy(const ProteinSequence& seq) const {
  return energy(std::string_view(seq.residues));
}

std::size_t kmer_index(std::string_view residues, std::size_t pos) {
  const int a = residue_index(residues[pos]);
  const int b = residue_index(residues[pos + 1]);
  const int c = residue_index(residues[pos + 2]);
  if (a < 0 || b < 0 || c < 0) throw DataError("kmer_index: invalid residue");
  return static_cast<std::size_t>((a * kAlphabetSize + b) * kAlphabetSize + c);
}

SyntheticEncoder::SyntheticEncoder(std::uint64_t seed, std::size_t dim)
    : seed_(seed), dim_(dim), projection_(dim * kKmerFeatures) {
  if (dim == 0) throw UsageError("embedding dimension must be positive");
  SplitMix64 rng(seed);
  for (auto& v : projection_) v = 2.0 * rng.uniform() - 1.0;
}

std::vector<double> SyntheticEncoder::encode(const ProteinSequence& seq) const {
  const std::string_view r = seq.residues;
  if (r.size() < kKmer) {
    throw DataError("encode: sequence '" + seq.id + "' shorter than " + std::to_string(kKmer));
  }
  std::vector<std::size_t> kmers;
  kmers.reserve(r.size() - kKmer + 1);
  for (std::size_t i = 0; i + kKmer <= r.size(); ++i) kmers.push_back(kmer_index(r, i));
  std::sort(kmers.begin(), kmers.end());

  // Sparse (feature, count) pairs; counts are L2-normalized.
  std::vector<std::pair<std::size_t, double>> counts;
  for (std::size_t k : kmers) {
    if (!counts.empty() && counts.back().first == k) {
      counts.back().second += 1.0;
    } else {
      counts.emplace_back(k, 1.0);
    }
  }
  double sq = 0.0;
  for (const auto& [_, c] : counts) sq += c * c;
  const double inv = 1.0 / std::sqrt(sq);

  std::vector<double> out(dim_, 0.0);
  for (std::size_t row = 0; row < dim_; ++row) {
    double acc = 0.0;
    for (const auto& [k, c] : counts) acc += projection(row, k) * (c * inv);
    out[row] = acc;
  }
  return out;
}

void AttributeSpec::validate() const {
  validate_attribute_name(id);
  if (motif.empty() || !is_valid_residues(motif)) {
    throw UsageError("attributes[" + id + "].motif: '" + motif +
                     "' is not a non-empty string over the 20-letter alphabet");
  }
  if (!(insertion_rate >= 0.0) || !std::isfinite(insertion_rate)) {
    throw UsageError("attributes[" + id + "].insertion_rate must be finite and >= 0");
  }
  if (length_min < 3) throw UsageError("attributes[" + id + "].length_min must be >= 3");
  if (length_max < length_min) {
    throw UsageError("attributes[" + id + "].length_max must be >= length_min");
  }
  if (length_max > kDefaultMaxLength) {
    throw UsageError("attributes[" + id + "].length_max exceeds " +
                     std::to_string(kDefaultMaxLength));
  }
}

SequenceDataset generate_training_set(const AttributeSpec& spec, std::size_t n) {
  spec.validate();
  if (n == 0) throw UsageError("generate_training_set: n must be >= 1");
  SplitMix64 rng(spec.seed);
  SequenceDataset out;
  out.attribute = spec.id;
  out.sequences.reserve(n);
  const std::size_t m = spec.motif.size();

  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t len = spec.length_min + rng.below(spec.length_max - spec.length_min + 1);
    const double expected = spec.insertion_rate * static_cast<double>(len) / 50.0;
    std::size_t k = static_cast<std::size_t>(std::floor(expected));
    if (rng.uniform() < expected - std::floor(expected)) ++k;
    k = std::min(k, len / m);

    // Place k motifs among the len - k*m background slots: choose k insertion
    // points from (len - k*m + k) items without replacement (partial shuffle).
    const std::size_t background = len - k * m;
    std::vector<std::size_t> items(background + k);
    for (std::size_t i = 0; i < items.size(); ++i) items[i] = i;
    for (std::size_t i = 0; i < k; ++i) {
      const std::size_t j = i + rng.below(items.size() - i);
      std::swap(items[i], items[j]);
    }
    std::vector<bool> is_motif(items.size(), false);
    for (std::size_t i = 0; i < k; ++i) is_motif[items[i]] = true;

    std::string residues;
    residues.reserve(len);
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (is_motif[i]) {
        residues += spec.motif;
      } else {
        residues += kAlphabet[rng.below(kAlphabetSize)];
      }
    }
    out.sequences.push_back({spec.id + "_" + std::to_string(s + 1), std::move(residues)});
  }
  return out;
}

std::size_t count_motif(std::string_view residues, std::string_view motif) {
  if (motif.empty()) return 0;
  std::size_t count = 0;
  std::size_t pos = residues.find(motif);
  while (pos != std::string_view::npos) {
    ++count;
    pos = residues.find(motif, pos + motif.size());
  }
  return count;
}

std::vector<AttributeSpec> default_attribute_specs() {
  return {
      {"A", "KLR", 2.0, 40, 120, 1001},
      {"B", "DED", 2.0, 40, 120, 2002},
  };
}

}  // namespace mlpo::synth
