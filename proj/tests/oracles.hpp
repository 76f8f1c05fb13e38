#pragma once

// Independent reference computations used by unit and acceptance tests.

#include <algorithm>
#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "mlpo/rng.hpp"
#include "mlpo/scoring.hpp"

namespace mlpo::testing {

inline double beta_density(double a, double b, double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  const double log_norm = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  return std::exp(log_norm + (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x));
}

namespace detail {
inline double simpson(const std::function<double(double)>& f, double lo, double hi, double flo,
                      double fmid, double fhi, double whole, double tol, int depth) {
  const double mid = 0.5 * (lo + hi);
  const double lm = 0.5 * (lo + mid);
  const double rm = 0.5 * (mid + hi);
  const double flm = f(lm);
  const double frm = f(rm);
  const double left = (mid - lo) / 6.0 * (flo + 4.0 * flm + fmid);
  const double right = (hi - mid) / 6.0 * (fmid + 4.0 * frm + fhi);
  const double delta = left + right - whole;
  if (depth <= 0 || std::abs(delta) <= 15.0 * tol) return left + right + delta / 15.0;
  return simpson(f, lo, mid, flo, flm, fmid, left, tol / 2.0, depth - 1) +
         simpson(f, mid, hi, fmid, frm, fhi, right, tol / 2.0, depth - 1);
}
}  // namespace detail

/// Adaptive Simpson quadrature.
inline double integrate(const std::function<double(double)>& f, double lo, double hi,
                        double tol = 1e-13) {
  const double flo = f(lo), fhi = f(hi), fmid = f(0.5 * (lo + hi));
  const double whole = (hi - lo) / 6.0 * (flo + 4.0 * fmid + fhi);
  return detail::simpson(f, lo, hi, flo, fmid, fhi, whole, tol, 60);
}

/// Beta CDF by quadrature of the density.
inline double beta_cdf_quadrature(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  return integrate([&](double t) { return beta_density(a, b, t); }, 0.0, x);
}

/// Beta(a, b) for integer a, b: the a-th smallest of a + b - 1 uniforms.
inline double beta_order_statistic(SplitMix64& rng, int a, int b) {
  std::vector<double> u(static_cast<std::size_t>(a + b - 1));
  for (auto& x : u) x = rng.uniform();
  std::nth_element(u.begin(), u.begin() + (a - 1), u.end());
  return u[static_cast<std::size_t>(a - 1)];
}

/// Every ordered (i, j) with strict dominance in gamma and every tau.
inline std::vector<std::pair<std::size_t, std::size_t>> brute_force_pairs(
    const std::vector<ScoreRecord>& r, const std::vector<std::string>& attributes) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t j = 0; j < r.size(); ++j) {
      bool ok = r[i].gamma > r[j].gamma;
      for (const auto& a : attributes) ok = ok && r[i].tau.at(a) > r[j].tau.at(a);
      if (ok) out.emplace_back(i, j);
    }
  }
  return out;
}

/// Sim over 3-gram sets built with a plain double loop.
inline double naive_sim(const std::string& a, const std::string& b) {
  std::vector<std::string> sa, sb;
  for (std::size_t i = 0; i + 3 <= a.size(); ++i) {
    const auto g = a.substr(i, 3);
    if (std::find(sa.begin(), sa.end(), g) == sa.end()) sa.push_back(g);
  }
  for (std::size_t i = 0; i + 3 <= b.size(); ++i) {
    const auto g = b.substr(i, 3);
    if (std::find(sb.begin(), sb.end(), g) == sb.end()) sb.push_back(g);
  }
  std::size_t common = 0;
  for (const auto& g : sa) common += std::find(sb.begin(), sb.end(), g) != sb.end();
  return static_cast<double>(common) / static_cast<double>(sa.size());
}

/// Random score records with distinct values, for pair and quality tests.
inline std::vector<ScoreRecord> random_records(SplitMix64& rng, std::size_t n,
                                               const std::vector<std::string>& attributes) {
  std::vector<ScoreRecord> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].id = "r" + std::to_string(i);
    out[i].energy = rng.uniform(-1.0, 1.0);
    out[i].gamma = rng.uniform();
    for (const auto& a : attributes) {
      out[i].tau_raw[a] = rng.uniform(-1.0, 1.0);
      out[i].tau[a] = rng.uniform();
    }
  }
  return out;
}

}  // namespace mlpo::testing
