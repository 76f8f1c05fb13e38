#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "mlpo/policy.hpp"
#include "mlpo/rng.hpp"

namespace mlpo::testing {

// Small enough for finite differences and exhaustive enumeration.
inline ModelConfig tiny_config(int residues = 3) {
  ModelConfig c;
  c.residue_count = residues;
  c.width = 8;
  c.layers = 2;
  c.heads = 2;
  c.context = 48;
  c.mlp_hidden = 12;
  c.prefix_length = 2;
  return c;
}

// Fresh policies have a zero output layer; gradient and normalization checks
// need every parameter to matter.
inline void perturb(Policy& policy, std::uint64_t seed, double scale = 0.3) {
  SplitMix64 rng(seed);
  for (auto& v : policy.trunk()) v += scale * rng.normal();
  for (auto& v : policy.prefixes().values()) v += scale * rng.normal();
}

inline Policy random_policy(const ModelConfig& config, std::vector<std::string> attributes,
                            std::uint64_t seed) {
  Policy p(config, std::move(attributes), seed);
  perturb(p, seed ^ 0x9e3779b97f4a7c15ULL);
  return p;
}

inline std::vector<int> random_tokens(SplitMix64& rng, int residues, std::size_t lo,
                                      std::size_t hi) {
  const std::size_t n = lo + rng.below(hi - lo + 1);
  std::vector<int> t(n);
  for (auto& v : t) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(residues)));
  return t;
}

inline std::string random_residues(SplitMix64& rng, std::size_t n, int residues = 20) {
  std::string s(n, 'A');
  for (auto& c : s) c = kAlphabet[rng.below(static_cast<std::uint64_t>(residues))];
  return s;
}

// Central difference of f with respect to *x.
template <class F>
double central_difference(double* x, double h, F&& f) {
  const double saved = *x;
  *x = saved + h;
  const double up = f();
  *x = saved - h;
  const double down = f();
  *x = saved;
  return (up - down) / (2.0 * h);
}

inline double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

}  // namespace mlpo::testing
