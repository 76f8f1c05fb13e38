#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mlpo/seqcore.hpp"

namespace mlpo {

/// Per-residue energy of a sequence; lower is more stable. Implementations
/// must be deterministic and safe to call concurrently.
class EnergyModel {
 public:
  virtual ~EnergyModel() = default;
  virtual double energy(const ProteinSequence& seq) const = 0;
};

/// Fixed-dimension structural embedding of a sequence. Implementations must be
/// deterministic and safe to call concurrently.
class StructureEncoder {
 public:
  virtual ~StructureEncoder() = default;
  virtual std::size_t dimension() const = 0;
  virtual std::vector<double> encode(const ProteinSequence& seq) const = 0;
};

struct ScoreRecord {
  std::string id;
  double energy = 0.0;
  double gamma = 0.0;
  std::map<std::string, double> tau_raw;  // cosine means, in [-1, 1]
  std::map<std::string, double> tau;      // min-max normalized over the pool

  bool operator==(const ScoreRecord&) const = default;
};

/// gamma_i = 1 - (e_i - e_min) / (e_max - e_min) over the given pool.
/// Throws DataError for fewer than two values or a zero range.
std::vector<double> stability_scores(std::span<const double> energies);

/// (v - v_min) / (v_max - v_min) over the pool, same error contract.
std::vector<double> normalize_tau(std::span<const double> raw_taus);

std::vector<double> embed(const ProteinSequence& seq, const StructureEncoder& encoder);

/// Mean cosine similarity between one embedding and every training embedding.
double functionality_score(std::span<const double> seq_embedding,
                           std::span<const std::vector<double>> training_embeddings);

/// Training-set embeddings, computed once per attribute and pre-normalized to
/// unit length so each candidate costs one dot product per training sequence.
class TrainingEmbeddings {
 public:
  TrainingEmbeddings(const SequenceDataset& dataset, const StructureEncoder& encoder);

  std::size_t size() const { return count_; }
  std::size_t dimension() const { return dim_; }
  const std::vector<std::vector<double>>& raw() const { return raw_; }

  /// functionality_score(embedding, raw()) up to rounding.
  double score(std::span<const double> seq_embedding) const;

 private:
  std::size_t count_ = 0;
  std::size_t dim_ = 0;
  std::vector<std::vector<double>> raw_;
  std::vector<double> unit_;  // count_ x dim_
};

using TrainingSets = std::map<std::string, SequenceDataset>;
using TrainingEmbeddingSets = std::map<std::string, TrainingEmbeddings>;

TrainingEmbeddingSets embed_training_sets(const TrainingSets& sets, const StructureEncoder& encoder);

/// Scores a candidate pool: raw energy, gamma over the pool, raw tau per
/// attribute, normalized tau per attribute. Output order matches the pool.
std::vector<ScoreRecord> score_pool(std::span<const ProteinSequence> pool, const EnergyModel& energy,
                                    const StructureEncoder& encoder,
                                    const TrainingEmbeddingSets& training);

std::vector<ScoreRecord> score_pool(std::span<const ProteinSequence> pool, const EnergyModel& energy,
                                    const StructureEncoder& encoder, const TrainingSets& training);

}  // namespace mlpo
