#include "mlpo/scoring.hpp"

#include <algorithm>
#include <cmath>

#include "mlpo/error.hpp"

namespace mlpo {

namespace {

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

std::pair<double, double> pool_range(std::span<const double> values, const char* what) {
  if (values.size() < 2) {
    throw DataError(std::string(what) + ": need at least two values, got " +
                    std::to_string(values.size()));
  }
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(std::isfinite(*lo) && std::isfinite(*hi))) {
    throw DataError(std::string(what) + ": non-finite value in pool");
  }
  if (*lo == *hi) throw DataError(std::string(what) + ": degenerate pool (all values equal)");
  return {*lo, *hi};
}

}  // namespace

std::vector<double> stability_scores(std::span<const double> energies) {
  const auto [e_min, e_max] = pool_range(energies, "stability_scores");
  const double range = e_max - e_min;
  std::vector<double> out;
  out.reserve(energies.size());
  for (double e : energies) out.push_back(1.0 - (e - e_min) / range);
  return out;
}

std::vector<double> normalize_tau(std::span<const double> raw_taus) {
  const auto [t_min, t_max] = pool_range(raw_taus, "normalize_tau");
  const double range = t_max - t_min;
  std::vector<double> out;
  out.reserve(raw_taus.size());
  for (double t : raw_taus) out.push_back((t - t_min) / range);
  return out;
}

std::vector<double> embed(const ProteinSequence& seq, const StructureEncoder& encoder) {
  auto v = encoder.encode(seq);
  if (v.size() != encoder.dimension()) {
    throw DataError("encoder returned dimension " + std::to_string(v.size()) + ", expected " +
                    std::to_string(encoder.dimension()));
  }
  return v;
}

double functionality_score(std::span<const double> seq_embedding,
                           std::span<const std::vector<double>> training_embeddings) {
  if (training_embeddings.empty()) throw DataError("functionality_score: empty training set");
  const double n_seq = norm2(seq_embedding);
  if (n_seq == 0.0) throw DataError("functionality_score: zero-norm embedding");
  double total = 0.0;
  for (const auto& t : training_embeddings) {
    if (t.size() != seq_embedding.size()) {
      throw DataError("functionality_score: dimension mismatch");
    }
    const double n_t = norm2(t);
    if (n_t == 0.0) throw DataError("functionality_score: zero-norm training embedding");
    double dot = 0.0;
    for (std::size_t i = 0; i < t.size(); ++i) dot += seq_embedding[i] * t[i];
    total += dot / (n_seq * n_t);
  }
  return std::clamp(total / static_cast<double>(training_embeddings.size()), -1.0, 1.0);
}

TrainingEmbeddings::TrainingEmbeddings(const SequenceDataset& dataset,
                                       const StructureEncoder& encoder)
    : count_(dataset.size()), dim_(encoder.dimension()) {
  if (count_ == 0) throw DataError("training set '" + dataset.attribute + "' is empty");
  raw_.reserve(count_);
  unit_.reserve(count_ * dim_);
  for (const auto& seq : dataset.sequences) {
    raw_.push_back(embed(seq, encoder));
    const double n = norm2(raw_.back());
    if (n == 0.0) throw DataError("zero-norm embedding for training sequence '" + seq.id + "'");
    for (double x : raw_.back()) unit_.push_back(x / n);
  }
}

double TrainingEmbeddings::score(std::span<const double> seq_embedding) const {
  if (seq_embedding.size() != dim_) throw DataError("functionality_score: dimension mismatch");
  const double n_seq = norm2(seq_embedding);
  if (n_seq == 0.0) throw DataError("functionality_score: zero-norm embedding");
  double total = 0.0;
  for (std::size_t j = 0; j < count_; ++j) {
    const double* u = unit_.data() + j * dim_;
    double dot = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) dot += seq_embedding[i] * u[i];
    total += dot / n_seq;
  }
  return std::clamp(total / static_cast<double>(count_), -1.0, 1.0);
}

TrainingEmbeddingSets embed_training_sets(const TrainingSets& sets, const StructureEncoder& encoder) {
  if (sets.empty()) throw DataError("no training sets supplied");
  TrainingEmbeddingSets out;
  for (const auto& [name, dataset] : sets) out.emplace(name, TrainingEmbeddings(dataset, encoder));
  return out;
}

std::vector<ScoreRecord> score_pool(std::span<const ProteinSequence> pool, const EnergyModel& energy,
                                    const StructureEncoder& encoder,
                                    const TrainingEmbeddingSets& training) {
  if (pool.size() < 2) {
    throw DataError("score_pool: degenerate pool of size " + std::to_string(pool.size()));
  }
  if (training.empty()) throw DataError("score_pool: no training sets");

  std::vector<ScoreRecord> records(pool.size());
  std::vector<double> energies(pool.size());
  std::map<std::string, std::vector<double>> raw_tau;
  for (const auto& [name, _] : training) raw_tau[name].resize(pool.size());

  for (std::size_t i = 0; i < pool.size(); ++i) {
    records[i].id = pool[i].id;
    energies[i] = energy.energy(pool[i]);
    if (!std::isfinite(energies[i])) throw DataError("non-finite energy for '" + pool[i].id + "'");
    records[i].energy = energies[i];
    const auto e = embed(pool[i], encoder);
    for (const auto& [name, emb] : training) {
      const double t = emb.score(e);
      raw_tau[name][i] = t;
      records[i].tau_raw[name] = t;
    }
  }

  const auto gamma = stability_scores(energies);
  for (std::size_t i = 0; i < pool.size(); ++i) records[i].gamma = gamma[i];
  for (const auto& [name, values] : raw_tau) {
    const auto norm = normalize_tau(values);
    for (std::size_t i = 0; i < pool.size(); ++i) records[i].tau[name] = norm[i];
  }
  return records;
}

std::vector<ScoreRecord> score_pool(std::span<const ProteinSequence> pool, const EnergyModel& energy,
                                    const StructureEncoder& encoder, const TrainingSets& training) {
  return score_pool(pool, energy, encoder, embed_training_sets(training, encoder));
}

}  // namespace mlpo
