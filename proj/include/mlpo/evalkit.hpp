#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlpo/ranking.hpp"
#include "mlpo/scoring.hpp"
#include "mlpo/seqcore.hpp"

namespace mlpo {

inline constexpr std::size_t kNgramOrder = 3;

/// Distinct contiguous substrings of length n. Throws DataError when the
/// sequence is shorter than n.
std::set<std::string> ngram_set(std::string_view sequence, std::size_t n = kNgramOrder);

/// |Set(a) & Set(b)| / |Set(a)| over 3-grams. Not symmetric.
double sim(std::string_view a, std::string_view b);

/// Packed 3-gram sets for many pairwise comparisons.
class NgramIndex {
 public:
  explicit NgramIndex(std::span<const std::string> sequences);
  std::size_t size() const { return sets_.size(); }
  /// sim(sequence i of this, sequence j of other)
  double sim(std::size_t i, const NgramIndex& other, std::size_t j) const;

 private:
  std::vector<std::vector<std::uint32_t>> sets_;
};

struct DiversityReport {
  double inter_output = 0.0;   // mean sim over ordered pairs i != j of the pool
  bool inter_output_defined = true;  // false for a single-sequence pool
  double training_set = 0.0;   // mean sim(generated, training) over all pairs
  std::size_t ngram_order = kNgramOrder;
  std::size_t generated_size = 0;
  std::size_t training_size = 0;
};

DiversityReport diversity_report(std::span<const ProteinSequence> generated,
                                 std::span<const ProteinSequence> training);

struct PoolSummary {
  std::size_t size = 0;
  double mean_energy = 0.0;
  double mean_gamma = 0.0;
  double median_gamma = 0.0;
  std::map<std::string, double> mean_tau;
  std::map<std::string, double> median_tau;
  std::map<std::string, double> mean_tau_raw;
  double mean_rho = 0.0;
};

/// Aggregates already-scored records; `quality` is aligned with `records`.
PoolSummary summarize(std::span<const ScoreRecord> records, std::span<const QualityScore> quality);

/// a - b field by field.
PoolSummary difference(const PoolSummary& a, const PoolSummary& b);

struct QualityReport {
  std::vector<std::string> attributes;
  PoolSummary pool;
  std::optional<PoolSummary> baseline;
  std::optional<PoolSummary> delta;  // pool - baseline
  // Per-sequence scores behind the summaries, normalized over the union of
  // pool and baseline when a baseline is given.
  std::vector<ScoreRecord> pool_records;
  std::vector<QualityScore> pool_quality;
  std::vector<ScoreRecord> baseline_records;
  std::vector<QualityScore> baseline_quality;
};

/// Scores the pool (jointly with the baseline when given: one gamma range, one
/// tau range per attribute, one fitted distribution each) and aggregates.
/// rho averages over every attribute in `training`.
QualityReport quality_report(std::span<const ProteinSequence> pool, const EnergyModel& energy,
                             const StructureEncoder& encoder,
                             const TrainingEmbeddingSets& training,
                             std::span<const ProteinSequence> baseline = {});

}  // namespace mlpo
