#include "mlpo/train.hpp"

#include <cmath>
#include <fstream>

#include <fmt/format.h>

#include "mlpo/error.hpp"
#include "mlpo/rng.hpp"

namespace mlpo {

TrainConfig TrainConfig::sft_defaults() { return TrainConfig{}; }

TrainConfig TrainConfig::preference_defaults() {
  TrainConfig c;
  c.learning_rate = 5e-5;
  c.steps = 300;
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw UsageError("learning_rate must be positive");
  }
  if (batch_size == 0) throw UsageError("batch_size must be positive");
  if (!(beta > 0.0)) throw UsageError("beta must be positive");
  if (!(alpha >= 0.0)) throw UsageError("alpha must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) ||
      !(adam_eps > 0.0)) {
    throw UsageError("invalid Adam constants");
  }
}

double neg_log_sigmoid(double x) {
  // softplus(-x)
  if (x < -30.0) return -x + std::log1p(std::exp(x));
  if (x > 30.0) return std::log1p(std::exp(-x));
  return std::log1p(std::exp(-x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---------------------------------------------------------------------------
// Losses

SftLoss sft_loss(const Policy& policy, std::span<const SftExample> batch) {
  if (batch.empty()) throw UsageError("sft_loss: empty batch");
  SftLoss out{0.0, PolicyGradient(policy)};
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const auto& ex : batch) {
    const double n_tok = static_cast<double>(ex.tokens.size() + 1);
    const double lp =
        sequence_logprob_backward(policy, *ex.cond, ex.tokens, true, -inv_b / n_tok, out.grad);
    out.loss += -lp / n_tok;
  }
  out.loss *= inv_b;
  return out;
}

SftLoss sft_loss(const Policy& policy, const Conditioning& cond,
                 std::span<const ProteinSequence> batch) {
  std::vector<std::vector<int>> tokens;
  tokens.reserve(batch.size());
  for (const auto& s : batch) tokens.push_back(policy.vocab().encode(s.residues));
  std::vector<SftExample> ex;
  for (const auto& t : tokens) ex.push_back({&cond, t});
  return sft_loss(policy, ex);
}

PreferenceLoss preference_loss(const Policy& theta, const Conditioning& cond,
                               std::span<const CachedPair> batch, double beta, double alpha) {
  if (batch.empty()) throw UsageError("preference loss: empty batch");
  PreferenceLoss out{0.0, PolicyGradient(theta), {}};
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  double margin_sum = 0.0;
  double drho_sum = 0.0;
  for (const auto& p : batch) {
    const LogprobTape w(theta, cond, p.winner);
    const LogprobTape l(theta, cond, p.loser);
    const double delta = (w.value() - p.ref_winner) - (l.value() - p.ref_loser);
    const double margin = beta * delta;
    const double x = margin - alpha * p.delta_rho;
    total += neg_log_sigmoid(x);
    // d/dx softplus(-x) = -sigmoid(-x)
    const double g = -sigmoid(-x) * beta * inv_b;
    w.backward(g, out.grad);
    l.backward(-g, out.grad);
    out.report.margins.push_back(margin);
    margin_sum += margin;
    drho_sum += p.delta_rho;
  }
  out.loss = total * inv_b;
  out.report.loss = out.loss;
  out.report.mean_margin = margin_sum * inv_b;
  out.report.mean_delta_rho = drho_sum * inv_b;
  return out;
}

namespace {

PreferenceLoss reference_loss(const Policy& theta, const Policy& ref,
                              std::span<const std::string> attributes,
                              std::span<const PairExample> batch, double beta, double alpha,
                              bool need_delta_rho) {
  const Conditioning cond_theta = theta.conditioning(attributes);
  const Conditioning cond_ref = ref.conditioning(attributes);
  std::vector<CachedPair> cached;
  cached.reserve(batch.size());
  for (const auto& p : batch) {
    if (need_delta_rho) {
      if (!p.delta_rho) throw DataError("mlpo_loss: pair without delta_rho");
      if (!(*p.delta_rho > 0.0)) throw DataError("mlpo_loss: delta_rho must be > 0");
    }
    cached.push_back({p.winner, p.loser, sequence_logprob(ref, cond_ref, p.winner),
                      sequence_logprob(ref, cond_ref, p.loser),
                      need_delta_rho ? *p.delta_rho : 0.0});
  }
  return preference_loss(theta, cond_theta, cached, beta, alpha);
}

}  // namespace

PreferenceLoss dpo_loss(const Policy& theta, const Policy& ref,
                        std::span<const std::string> attributes, std::span<const PairExample> batch,
                        double beta) {
  return reference_loss(theta, ref, attributes, batch, beta, 0.0, false);
}

PreferenceLoss mlpo_loss(const Policy& theta, const Policy& ref,
                         std::span<const std::string> attributes,
                         std::span<const PairExample> batch, double beta, double alpha) {
  return reference_loss(theta, ref, attributes, batch, beta, alpha, true);
}

// ---------------------------------------------------------------------------
// Optimizer

Adam::Adam(const Policy& policy, const TrainConfig& config)
    : lr_(config.learning_rate),
      b1_(config.adam_beta1),
      b2_(config.adam_beta2),
      eps_(config.adam_eps),
      m_trunk_(policy.trunk().size(), 0.0),
      v_trunk_(policy.trunk().size(), 0.0),
      m_prefix_(policy.prefixes().values().size(), 0.0),
      v_prefix_(policy.prefixes().values().size(), 0.0) {}

void Adam::step(Policy& policy, const PolicyGradient& grad) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  auto update = [&](std::vector<double>& p, const std::vector<double>& g, std::vector<double>& m,
                    std::vector<double>& v) {
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = b1_ * m[i] + (1.0 - b1_) * g[i];
      v[i] = b2_ * v[i] + (1.0 - b2_) * g[i] * g[i];
      const double mh = m[i] / c1;
      const double vh = v[i] / c2;
      p[i] -= lr_ * mh / (std::sqrt(vh) + eps_);
    }
  };
  update(policy.trunk(), grad.trunk, m_trunk_, v_trunk_);
  update(policy.prefixes().values(), grad.prefixes, m_prefix_, v_prefix_);
}

// ---------------------------------------------------------------------------
// Loops

namespace {

/// Cycles through seeded shuffles of [0, n).
class BatchSampler {
 public:
  BatchSampler(std::size_t n, std::uint64_t seed) : order_(n), rng_(seed) {
    for (std::size_t i = 0; i < n; ++i) order_[i] = i;
    reshuffle();
  }

  std::vector<std::size_t> next(std::size_t batch) {
    std::vector<std::size_t> out;
    out.reserve(batch);
    while (out.size() < batch) {
      if (pos_ == order_.size()) reshuffle();
      out.push_back(order_[pos_++]);
    }
    return out;
  }

 private:
  void reshuffle() {
    for (std::size_t i = order_.size(); i > 1; --i) {
      std::swap(order_[i - 1], order_[rng_.below(i)]);
    }
    pos_ = 0;
  }

  std::vector<std::size_t> order_;
  SplitMix64 rng_;
  std::size_t pos_ = 0;
};

}  // namespace

SftResult train_sft(const TrainConfig& config, Policy initial,
                    std::span<const SequenceDataset> datasets) {
  config.validate();
  if (datasets.empty()) throw UsageError("train_sft: no datasets");

  std::vector<Conditioning> conds;
  std::vector<std::pair<std::size_t, std::vector<int>>> items;  // (cond index, tokens)
  for (const auto& ds : datasets) {
    if (ds.sequences.empty()) throw DataError("train_sft: dataset '" + ds.attribute + "' is empty");
    conds.push_back(initial.conditioning(ds.attribute));
    for (const auto& s : ds.sequences) {
      items.emplace_back(conds.size() - 1, initial.vocab().encode(s.residues));
    }
  }

  SftResult result{std::move(initial), {}};
  Policy& policy = result.policy;
  Adam adam(policy, config);
  BatchSampler sampler(items.size(), derive_seed(config.seed, "sft-batches"));
  for (std::size_t step = 0; step < config.steps; ++step) {
    // Conditioning copies prefix values, so rebuild after every update.
    for (std::size_t c = 0; c < conds.size(); ++c) {
      conds[c] = policy.conditioning(datasets[c].attribute);
    }
    std::vector<SftExample> batch;
    for (std::size_t i : sampler.next(config.batch_size)) {
      batch.push_back({&conds[items[i].first], items[i].second});
    }
    auto loss = sft_loss(policy, batch);
    if (!std::isfinite(loss.loss)) {
      throw DivergenceError("SFT loss is not finite at step " + std::to_string(step));
    }
    result.curve.push_back({step, loss.loss});
    adam.step(policy, loss.grad);
  }
  return result;
}

const char* to_string(PreferenceMode mode) { return mode == PreferenceMode::dpo ? "dpo" : "mlpo"; }

PreferenceMode parse_preference_mode(std::string_view text) {
  if (text == "dpo") return PreferenceMode::dpo;
  if (text == "mlpo") return PreferenceMode::mlpo;
  throw UsageError("unknown preference mode '" + std::string(text) + "' (expected dpo or mlpo)");
}

PreferenceResult train_preference(const TrainConfig& config, const Policy& initial,
                                  const PreferenceDataset& pairs,
                                  const std::map<std::string, std::string>& sequences,
                                  std::span<const std::string> attributes, PreferenceMode mode) {
  config.validate();
  if (pairs.pairs.empty()) throw DataError("train_preference: empty preference dataset");
  const double alpha = mode == PreferenceMode::mlpo ? config.alpha : 0.0;

  const Policy reference = initial;
  PreferenceResult result{initial, {}, 0.0, 0.0, reference.checksum(), 0};
  Policy& policy = result.policy;

  // Reference log-likelihoods per distinct sequence.
  const Conditioning ref_cond = reference.conditioning(attributes);
  std::map<std::string, std::pair<std::vector<int>, double>> cache;
  auto lookup = [&](const std::string& id) -> const std::pair<std::vector<int>, double>& {
    auto it = cache.find(id);
    if (it != cache.end()) return it->second;
    const auto s = sequences.find(id);
    if (s == sequences.end()) throw DataError("pair references unknown sequence '" + id + "'");
    auto tokens = reference.vocab().encode(s->second);
    const double lp = sequence_logprob(reference, ref_cond, tokens);
    return cache.emplace(id, std::make_pair(std::move(tokens), lp)).first->second;
  };

  std::vector<CachedPair> all;
  all.reserve(pairs.pairs.size());
  for (const auto& p : pairs.pairs) {
    if (mode == PreferenceMode::mlpo && !(p.delta_rho > 0.0)) {
      throw DataError("pair (" + p.winner + ", " + p.loser + ") has no positive delta_rho");
    }
    const auto& w = lookup(p.winner);
    const auto& l = lookup(p.loser);
    all.push_back({w.first, l.first, w.second, l.second, p.delta_rho});
  }

  // Each distinct sequence is scored once under the current policy.
  auto dataset_margin = [&](const Policy& p) {
    const Conditioning cond = p.conditioning(attributes);
    std::map<std::string, double> lp;
    for (const auto& [id, entry] : cache) lp[id] = sequence_logprob(p, cond, entry.first);
    double total = 0.0;
    for (const auto& q : pairs.pairs) {
      total += config.beta * ((lp.at(q.winner) - cache.at(q.winner).second) -
                              (lp.at(q.loser) - cache.at(q.loser).second));
    }
    return total / static_cast<double>(pairs.pairs.size());
  };
  result.dataset_margin_before = dataset_margin(policy);

  Adam adam(policy, config);
  BatchSampler sampler(all.size(), derive_seed(config.seed, "preference-batches"));
  for (std::size_t step = 0; step < config.steps; ++step) {
    const Conditioning cond = policy.conditioning(attributes);
    std::vector<CachedPair> batch;
    for (std::size_t i : sampler.next(config.batch_size)) batch.push_back(all[i]);
    auto loss = preference_loss(policy, cond, batch, config.beta, alpha);
    if (!std::isfinite(loss.loss)) {
      throw DivergenceError(std::string(to_string(mode)) + " loss is not finite at step " +
                            std::to_string(step));
    }
    result.curve.push_back(
        {step, loss.loss, loss.report.mean_margin, loss.report.mean_delta_rho});
    adam.step(policy, loss.grad);
  }
  result.dataset_margin_after = dataset_margin(policy);
  result.reference_checksum_after = reference.checksum();
  return result;
}

void write_sft_curve(std::span<const SftStep> curve, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "step,loss\n";
  for (const auto& s : curve) out << fmt::format("{},{:.17g}\n", s.step, s.loss);
}

void write_preference_curve(std::span<const PreferenceStep> curve,
                            const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << "step,loss,mean_margin,mean_delta_rho\n";
  for (const auto& s : curve) {
    out << fmt::format("{},{:.17g},{:.17g},{:.17g}\n", s.step, s.loss, s.mean_margin,
                       s.mean_delta_rho);
  }
}

}  // namespace mlpo
