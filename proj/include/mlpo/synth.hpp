#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mlpo/scoring.hpp"
#include "mlpo/seqcore.hpp"

namespace mlpo::synth {

/// Version tag of the oracle generation procedure. Bump when the PRNG, the
/// table draw order or the feature map changes.
inline constexpr int kOracleVersion = 1;

/// Adjacent-pair energy oracle. The 20x20 table is filled row-major
/// (table[a][b], a outer) with 2u - 1, u drawn from SplitMix64(seed).
class SyntheticEnergyModel final : public EnergyModel {
 public:
  explicit SyntheticEnergyModel(std::uint64_t seed);

  /// Sum of table[a_i][a_{i+1}] over adjacent pairs, divided by length.
  double energy(const ProteinSequence& seq) const override;
  double energy(std::string_view residues) const;

  double table(int a, int b) const { return table_[static_cast<std::size_t>(a * kAlphabetSize + b)]; }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::array<double, kAlphabetSize * kAlphabetSize> table_{};
};

inline constexpr std::size_t kKmer = 3;
inline constexpr std::size_t kKmerFeatures = kAlphabetSize * kAlphabetSize * kAlphabetSize;
inline constexpr std::size_t kDefaultEmbeddingDim = 32;

/// Feature index of the 3-mer starting at residues[pos]: a*400 + b*20 + c.
std::size_t kmer_index(std::string_view residues, std::size_t pos);

/// Random projection of the L2-normalized 3-mer count vector. The projection
/// matrix is dim x 8000, filled row-major with 2u - 1 from SplitMix64(seed).
class SyntheticEncoder final : public StructureEncoder {
 public:
  explicit SyntheticEncoder(std::uint64_t seed, std::size_t dim = kDefaultEmbeddingDim);

  std::size_t dimension() const override { return dim_; }
  /// Throws DataError for sequences shorter than 3.
  std::vector<double> encode(const ProteinSequence& seq) const override;

  double projection(std::size_t row, std::size_t feature) const {
    return projection_[row * kKmerFeatures + feature];
  }
  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
  std::size_t dim_;
  std::vector<double> projection_;
};

struct AttributeSpec {
  std::string id;
  std::string motif;
  double insertion_rate = 2.0;  // expected motif count per 50 residues
  std::size_t length_min = 40;
  std::size_t length_max = 120;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Background residues drawn uniformly, with the motif written at
/// non-overlapping seeded positions. The motif count for a sequence of length
/// l has mean insertion_rate * l / 50 (floor plus a Bernoulli remainder,
/// capped by l / |motif|).
SequenceDataset generate_training_set(const AttributeSpec& spec, std::size_t n);

/// Non-overlapping left-to-right occurrences of motif in residues.
std::size_t count_motif(std::string_view residues, std::string_view motif);

/// Shipped default attributes: A with motif KLR and B with motif DED.
std::vector<AttributeSpec> default_attribute_specs();

}  // namespace mlpo::synth
