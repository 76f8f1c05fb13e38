#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mlpo/ranking.hpp"
#include "mlpo/scoring.hpp"

namespace mlpo {

struct PreferencePair {
  std::string winner;
  std::string loser;
  double rho_w = 0.0;
  double rho_l = 0.0;
  double delta_rho = 0.0;

  bool operator==(const PreferencePair&) const = default;
};

struct PreferenceDataset {
  std::vector<std::string> attributes;
  std::vector<PreferencePair> pairs;
  std::string pool_reference;
  std::uint64_t seed = 0;
  std::size_t max_pairs = 0;
  std::size_t valid_pair_count = 0;

  std::size_t size() const { return pairs.size(); }
};

/// i beats j iff gamma_i > gamma_j and tau_k(i) > tau_k(j) for every listed
/// attribute (all strict).
bool dominates(const ScoreRecord& winner, const ScoreRecord& loser,
               std::span<const std::string> attributes);

/// Every ordered (winner, loser) index pair satisfying `dominates`, in
/// row-major order.
std::vector<std::pair<std::size_t, std::size_t>> valid_pairs(
    std::span<const ScoreRecord> records, std::span<const std::string> attributes);

/// Uniformly samples min(max_pairs, #valid) distinct valid pairs with a
/// seeded partial Fisher-Yates shuffle and attaches rho from `quality`
/// (aligned with records). Throws DataError when no valid pair exists.
PreferenceDataset build_pairs(std::span<const ScoreRecord> records,
                              std::span<const QualityScore> quality,
                              std::span<const std::string> attributes, std::size_t max_pairs,
                              std::uint64_t seed);

}  // namespace mlpo
