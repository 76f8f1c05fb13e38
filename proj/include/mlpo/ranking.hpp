#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mlpo/scoring.hpp"

namespace mlpo {

inline constexpr double kFitClamp = 1e-6;
inline constexpr std::size_t kMinBetaSamples = 8;

/// A fitted score distribution on [0, 1]. Beta parameters come from the
/// method of moments; degenerate or moment-infeasible pools fall back to the
/// empirical CDF of the (clamped) sample.
class FittedDistribution {
 public:
  enum class Kind { beta, empirical };

  static FittedDistribution beta(double a, double b);
  static FittedDistribution empirical(std::vector<double> samples);

  Kind kind() const { return kind_; }
  double a() const { return a_; }
  double b() const { return b_; }
  std::size_t count() const { return count_; }
  double mean() const { return mean_; }
  double variance() const { return variance_; }
  const std::vector<double>& sorted_samples() const { return sorted_; }

  /// F(x) with x clamped to [0, 1].
  double cdf(double x) const;

 private:
  friend FittedDistribution fit_beta(std::span<const double> samples);

  Kind kind_ = Kind::empirical;
  double a_ = 0.0;
  double b_ = 0.0;
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double variance_ = 0.0;
  std::vector<double> sorted_;
};

const char* to_string(FittedDistribution::Kind kind);

/// Clamps to [1e-6, 1 - 1e-6] and fits Beta(a, b) by moments. Fewer than 8
/// samples, variance below 1e-12, or variance >= m(1 - m) give the empirical
/// fallback. Throws DataError on empty input.
FittedDistribution fit_beta(std::span<const double> samples);

/// Regularized incomplete beta I_x(a, b) via Lentz's continued fraction, using
/// the symmetry I_x(a, b) = 1 - I_{1-x}(b, a) for x > (a + 1) / (a + b + 2).
double regularized_incomplete_beta(double a, double b, double x);

inline double cdf(const FittedDistribution& dist, double x) { return dist.cdf(x); }

/// G(s) = F(s) * (2^s - 1).
double weighted_score(const FittedDistribution& dist, double s);

struct QualityScore {
  std::string id;
  double g_gamma = 0.0;
  std::map<std::string, double> g_tau;
  double rho = 0.0;
};

struct PoolDistributions {
  FittedDistribution gamma;
  std::map<std::string, FittedDistribution> tau;
};

/// One fit for gamma and one per attribute for normalized tau, over the whole
/// pool.
PoolDistributions fit_pool(std::span<const ScoreRecord> records,
                           std::span<const std::string> attributes);

/// rho = G(gamma) + (1/K) * sum_k G(tau_k) over the K attributes in tau_dists;
/// with K = 1 this is G(gamma) + G(tau). Throws DataError when a record lacks
/// an attribute.
std::vector<QualityScore> quality_scores(std::span<const ScoreRecord> records,
                                         const FittedDistribution& gamma_dist,
                                         const std::map<std::string, FittedDistribution>& tau_dists);

inline std::vector<QualityScore> quality_scores(std::span<const ScoreRecord> records,
                                                const PoolDistributions& dists) {
  return quality_scores(records, dists.gamma, dists.tau);
}

}  // namespace mlpo
