#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mlpo/policy.hpp"
#include "mlpo/prefdata.hpp"
#include "mlpo/seqcore.hpp"

namespace mlpo {

/// Hyperparameters for one training phase.
struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  std::size_t steps = 200;
  std::uint64_t seed = 0;
  double beta = 0.1;
  double alpha = 0.05;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  static TrainConfig sft_defaults();
  static TrainConfig preference_defaults();
  void validate() const;
};

/// -log(sigmoid(x)) = log(1 + exp(-x)), stable for large |x|.
double neg_log_sigmoid(double x);
double sigmoid(double x);

struct SftExample {
  const Conditioning* cond = nullptr;
  std::span<const int> tokens;
};

struct SftLoss {
  double loss = 0.0;
  PolicyGradient grad;
};

/// Mean over the batch of the per-token negative log-likelihood of each
/// sequence (residues plus EOS).
SftLoss sft_loss(const Policy& policy, std::span<const SftExample> batch);
SftLoss sft_loss(const Policy& policy, const Conditioning& cond,
                 std::span<const ProteinSequence> batch);

struct PairExample {
  std::span<const int> winner;
  std::span<const int> loser;
  std::optional<double> delta_rho;
};

struct LossReport {
  double loss = 0.0;
  std::vector<double> margins;  // beta * (winner log-ratio - loser log-ratio)
  double mean_margin = 0.0;
  double mean_delta_rho = 0.0;
};

struct PreferenceLoss {
  double loss = 0.0;
  PolicyGradient grad;
  LossReport report;
};

/// Reference log-likelihoods for one pair, computed once because the
/// reference policy is frozen.
struct CachedPair {
  std::span<const int> winner;
  std::span<const int> loser;
  double ref_winner = 0.0;
  double ref_loser = 0.0;
  double delta_rho = 0.0;
};

/// Mean over the batch of -log sigmoid(beta * D - alpha * delta_rho), where
/// D = [log pi(w) - log ref(w)] - [log pi(l) - log ref(l)]. Gradients are with
/// respect to `theta` only; delta_rho is a constant. alpha = 0 gives DPO.
PreferenceLoss preference_loss(const Policy& theta, const Conditioning& cond,
                               std::span<const CachedPair> batch, double beta, double alpha);

/// DPO baseline loss against a frozen reference policy.
PreferenceLoss dpo_loss(const Policy& theta, const Policy& ref,
                        std::span<const std::string> attributes, std::span<const PairExample> batch,
                        double beta);

/// DPO with the quality-gap regularizer inside the sigmoid. Every pair must
/// carry delta_rho > 0 (DataError otherwise).
PreferenceLoss mlpo_loss(const Policy& theta, const Policy& ref,
                         std::span<const std::string> attributes,
                         std::span<const PairExample> batch, double beta, double alpha);

/// Adam with bias correction over trunk and prefix parameters.
class Adam {
 public:
  Adam(const Policy& policy, const TrainConfig& config);
  void step(Policy& policy, const PolicyGradient& grad);
  std::size_t steps_taken() const { return t_; }

 private:
  double lr_, b1_, b2_, eps_;
  std::size_t t_ = 0;
  std::vector<double> m_trunk_, v_trunk_, m_prefix_, v_prefix_;
};

struct SftStep {
  std::size_t step = 0;
  double loss = 0.0;
};

struct SftResult {
  Policy policy;
  std::vector<SftStep> curve;
};

/// Adam on sft_loss. Each dataset trains the prefix named by its attribute;
/// the trunk is shared. Batches are drawn from seeded per-epoch shuffles of
/// all sequences. Throws DivergenceError on a non-finite loss.
SftResult train_sft(const TrainConfig& config, Policy initial,
                    std::span<const SequenceDataset> datasets);

enum class PreferenceMode { dpo, mlpo };
const char* to_string(PreferenceMode mode);
PreferenceMode parse_preference_mode(std::string_view text);

struct PreferenceStep {
  std::size_t step = 0;
  double loss = 0.0;
  double mean_margin = 0.0;
  double mean_delta_rho = 0.0;
};

struct PreferenceResult {
  Policy policy;
  std::vector<PreferenceStep> curve;
  // Mean implicit-reward margin over every pair in the dataset, before and
  // after training (the curve only sees one batch per step).
  double dataset_margin_before = 0.0;
  double dataset_margin_after = 0.0;
  std::uint64_t reference_checksum_before = 0;
  std::uint64_t reference_checksum_after = 0;
};

/// Optimizes the selected preference loss starting from `initial`, which is
/// also frozen as the reference policy. `sequences` maps every pair id to its
/// residues; `attributes` selects the (possibly concatenated) conditioning.
PreferenceResult train_preference(const TrainConfig& config, const Policy& initial,
                                  const PreferenceDataset& pairs,
                                  const std::map<std::string, std::string>& sequences,
                                  std::span<const std::string> attributes, PreferenceMode mode);

void write_sft_curve(std::span<const SftStep> curve, const std::filesystem::path& path);
void write_preference_curve(std::span<const PreferenceStep> curve,
                            const std::filesystem::path& path);

}  // namespace mlpo
