#include "mlpo/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mlpo/error.hpp"

namespace mlpo {

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;

  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < kEps) return h;
  }
  return h;
}

double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw DataError("incomplete beta: parameters must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return std::clamp(front * beta_continued_fraction(a, b, x) / a, 0.0, 1.0);
  }
  return std::clamp(1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b, 0.0, 1.0);
}

FittedDistribution FittedDistribution::beta(double a, double b) {
  if (!(a > 0.0) || !(b > 0.0) || !std::isfinite(a) || !std::isfinite(b)) {
    throw DataError("beta distribution parameters must be positive and finite");
  }
  FittedDistribution d;
  d.kind_ = Kind::beta;
  d.a_ = a;
  d.b_ = b;
  d.mean_ = a / (a + b);
  d.variance_ = a * b / ((a + b) * (a + b) * (a + b + 1.0));
  return d;
}

FittedDistribution FittedDistribution::empirical(std::vector<double> samples) {
  if (samples.empty()) throw DataError("empirical distribution needs at least one sample");
  FittedDistribution d;
  d.kind_ = Kind::empirical;
  std::sort(samples.begin(), samples.end());
  d.count_ = samples.size();
  d.mean_ = mean_of(samples);
  double ss = 0.0;
  for (double x : samples) ss += (x - d.mean_) * (x - d.mean_);
  d.variance_ = samples.size() > 1 ? ss / static_cast<double>(samples.size() - 1) : 0.0;
  d.sorted_ = std::move(samples);
  return d;
}

double FittedDistribution::cdf(double x) const {
  if (std::isnan(x)) throw DataError("cdf of NaN");
  x = std::clamp(x, 0.0, 1.0);
  if (kind_ == Kind::beta) return regularized_incomplete_beta(a_, b_, x);
  if (x >= 1.0) return 1.0;
  const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
  return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
}

const char* to_string(FittedDistribution::Kind kind) {
  return kind == FittedDistribution::Kind::beta ? "beta" : "empirical";
}

FittedDistribution fit_beta(std::span<const double> samples) {
  if (samples.empty()) throw DataError("fit_beta: empty sample");
  std::vector<double> clamped;
  clamped.reserve(samples.size());
  for (double x : samples) {
    if (!std::isfinite(x)) throw DataError("fit_beta: non-finite sample");
    clamped.push_back(std::clamp(x, kFitClamp, 1.0 - kFitClamp));
  }

  // Summing in sorted order makes the fit independent of pool order.
  std::sort(clamped.begin(), clamped.end());
  const double m = mean_of(clamped);
  double ss = 0.0;
  for (double x : clamped) ss += (x - m) * (x - m);
  const double v = clamped.size() > 1 ? ss / static_cast<double>(clamped.size() - 1) : 0.0;

  const bool feasible = clamped.size() >= kMinBetaSamples && v >= 1e-12 && v < m * (1.0 - m);
  if (!feasible) return FittedDistribution::empirical(std::move(clamped));

  const double common = m * (1.0 - m) / v - 1.0;
  FittedDistribution d = FittedDistribution::beta(m * common, (1.0 - m) * common);
  d.count_ = clamped.size();
  d.mean_ = m;
  d.variance_ = v;
  return d;
}

double weighted_score(const FittedDistribution& dist, double s) {
  s = std::clamp(s, 0.0, 1.0);
  return dist.cdf(s) * (std::exp2(s) - 1.0);
}

PoolDistributions fit_pool(std::span<const ScoreRecord> records,
                           std::span<const std::string> attributes) {
  if (records.empty()) throw DataError("fit_pool: empty pool");
  std::vector<double> gamma;
  gamma.reserve(records.size());
  for (const auto& r : records) gamma.push_back(r.gamma);
  PoolDistributions out{fit_beta(gamma), {}};
  for (const auto& name : attributes) {
    std::vector<double> tau;
    tau.reserve(records.size());
    for (const auto& r : records) {
      const auto it = r.tau.find(name);
      if (it == r.tau.end()) {
        throw DataError("record '" + r.id + "' has no tau for attribute '" + name + "'");
      }
      tau.push_back(it->second);
    }
    out.tau.emplace(name, fit_beta(tau));
  }
  return out;
}

std::vector<QualityScore> quality_scores(std::span<const ScoreRecord> records,
                                         const FittedDistribution& gamma_dist,
                                         const std::map<std::string, FittedDistribution>& tau_dists) {
  if (tau_dists.empty()) throw DataError("quality_scores: no attribute distributions");
  const double k = static_cast<double>(tau_dists.size());
  std::vector<QualityScore> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    QualityScore q;
    q.id = r.id;
    q.g_gamma = weighted_score(gamma_dist, r.gamma);
    double sum = 0.0;
    for (const auto& [name, dist] : tau_dists) {
      const auto it = r.tau.find(name);
      if (it == r.tau.end()) {
        throw DataError("record '" + r.id + "' has no tau for attribute '" + name + "'");
      }
      const double g = weighted_score(dist, it->second);
      q.g_tau[name] = g;
      sum += g;
    }
    q.rho = q.g_gamma + sum / k;
    out.push_back(std::move(q));
  }
  return out;
}

}  // namespace mlpo
