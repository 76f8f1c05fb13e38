#include <cmath>

#include "doctest.h"
#include "support.hpp"

#include "mlpo/error.hpp"
#include "mlpo/scoring.hpp"
#include "mlpo/synth.hpp"

using namespace mlpo;
using namespace mlpo::testing;

namespace {

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  return ab / std::sqrt(aa * bb);
}

std::vector<double> random_vector(SplitMix64& rng, std::size_t d) {
  std::vector<double> v(d);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("stability scores") {
  const std::vector<double> e{-300, -200, -100};
  CHECK(stability_scores(e) == std::vector<double>{1.0, 0.5, 0.0});
  CHECK_THROWS_AS(stability_scores(std::vector<double>{5, 5, 5}), DataError);
  CHECK_THROWS_AS(stability_scores(std::vector<double>{5}), DataError);
  CHECK_THROWS_AS(stability_scores(std::vector<double>{}), DataError);

  SplitMix64 rng(1);
  std::vector<double> pool(1000);
  for (auto& x : pool) x = rng.uniform(-3.0, 2.0);
  const auto g = stability_scores(pool);
  const double lo = *std::min_element(pool.begin(), pool.end());
  const double hi = *std::max_element(pool.begin(), pool.end());
  int zeros = 0, ones = 0;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    CHECK(g[i] >= 0.0);
    CHECK(g[i] <= 1.0);
    CHECK(g[i] == doctest::Approx(1.0 - (pool[i] - lo) / (hi - lo)).epsilon(1e-15));
    zeros += g[i] == 0.0;
    ones += g[i] == 1.0;
  }
  CHECK(zeros == 1);
  CHECK(ones == 1);

  // Order reversing, and invariant under positive affine maps.
  std::vector<double> affine(pool.size());
  for (std::size_t i = 0; i < pool.size(); ++i) affine[i] = 3.0 * pool[i] + 7.0;
  const auto ga = stability_scores(affine);
  for (std::size_t i = 0; i + 1 < pool.size(); ++i) {
    if (pool[i] < pool[i + 1]) CHECK(g[i] > g[i + 1]);
    CHECK(ga[i] == doctest::Approx(g[i]).epsilon(1e-12));
  }
}

TEST_CASE("tau normalization") {
  CHECK(normalize_tau(std::vector<double>{-1, 0, 1}) == std::vector<double>{0, 0.5, 1});
  CHECK_THROWS_AS(normalize_tau(std::vector<double>{0.2, 0.2}), DataError);
  SplitMix64 rng(2);
  std::vector<double> raw(100);
  for (auto& x : raw) x = rng.uniform(-1.0, 1.0);
  const auto n = normalize_tau(raw);
  const double lo = *std::min_element(raw.begin(), raw.end());
  const double hi = *std::max_element(raw.begin(), raw.end());
  for (std::size_t i = 0; i < raw.size(); ++i) {
    CHECK(n[i] == doctest::Approx((raw[i] - lo) / (hi - lo)).epsilon(1e-15));
  }
}

TEST_CASE("functionality score") {
  const std::vector<double> v{1, 2, 3};
  const std::vector<double> w{3, 0, -1};  // orthogonal to v
  std::vector<double> neg{-1, -2, -3};
  CHECK(functionality_score(v, std::vector<std::vector<double>>{v}) == doctest::Approx(1.0));
  CHECK(functionality_score(v, std::vector<std::vector<double>>{w}) == doctest::Approx(0.0));
  CHECK(functionality_score(v, std::vector<std::vector<double>>{v, neg}) == doctest::Approx(0.0));
  CHECK_THROWS_AS(functionality_score(std::vector<double>{0, 0, 0}, std::vector<std::vector<double>>{v}),
                  DataError);
  CHECK_THROWS_AS(functionality_score(v, std::vector<std::vector<double>>{{1, 2}}), DataError);
  CHECK_THROWS_AS(functionality_score(v, std::vector<std::vector<double>>{}), DataError);

  SplitMix64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto q = random_vector(rng, 16);
    std::vector<std::vector<double>> train;
    for (int j = 0; j < 50; ++j) train.push_back(random_vector(rng, 16));
    double brute = 0.0;
    for (const auto& t : train) brute += cosine(q, t);
    brute /= 50.0;
    const double f = functionality_score(q, train);
    CHECK(std::abs(f - brute) <= 1e-12);
    CHECK(f >= -1.0);
    CHECK(f <= 1.0);
    // Cosine is invariant to positive rescaling.
    auto scaled = q;
    for (auto& x : scaled) x *= 17.5;
    CHECK(std::abs(functionality_score(scaled, train) - f) <= 1e-12);
  }
}

TEST_CASE("score_pool records") {
  const synth::SyntheticEnergyModel energy(7);
  const synth::SyntheticEncoder encoder(8);
  TrainingSets train;
  train["A"] = synth::generate_training_set({"A", "KLR", 2.0, 40, 120, 1001}, 200);
  train["B"] = synth::generate_training_set({"B", "DED", 2.0, 40, 120, 2002}, 200);

  SUBCASE("pool of two") {
    const std::vector<ProteinSequence> pool{{"x", "MKVLAG"}, {"y", "WWPQRS"}};
    const auto r = score_pool(pool, energy, encoder, train);
    REQUIRE(r.size() == 2);
    CHECK(((r[0].gamma == 0.0 && r[1].gamma == 1.0) || (r[0].gamma == 1.0 && r[1].gamma == 0.0)));
  }
  SUBCASE("invariant sweep and duplicates") {
    SplitMix64 rng(4);
    std::vector<ProteinSequence> pool;
    for (int i = 0; i < 500; ++i) {
      pool.push_back({"p" + std::to_string(i), random_residues(rng, 3 + rng.below(100))});
    }
    pool.push_back({"dup", pool[10].residues});
    const auto r = score_pool(pool, energy, encoder, train);
    REQUIRE(r.size() == pool.size());
    for (std::size_t i = 0; i < r.size(); ++i) {
      CHECK(r[i].id == pool[i].id);
      CHECK(r[i].energy == energy.energy(pool[i]));
      CHECK((r[i].gamma >= 0.0 && r[i].gamma <= 1.0));
      for (const auto& [k, t] : r[i].tau) CHECK((t >= 0.0 && t <= 1.0));
      for (const auto& [k, t] : r[i].tau_raw) CHECK((t >= -1.0 && t <= 1.0));
      CHECK(r[i].tau.size() == 2);
    }
    CHECK(r.back().gamma == r[10].gamma);
    CHECK(r.back().tau == r[10].tau);
    CHECK(r == score_pool(pool, energy, encoder, train));
  }
  SUBCASE("degenerate pools") {
    const std::vector<ProteinSequence> one{{"x", "MKV"}};
    CHECK_THROWS_AS(score_pool(one, energy, encoder, train), DataError);
    const std::vector<ProteinSequence> same{{"x", "MKV"}, {"y", "MKV"}};
    CHECK_THROWS_AS(score_pool(same, energy, encoder, train), DataError);
  }
}

TEST_CASE("cached training embeddings agree with the direct formula") {
  const synth::SyntheticEncoder encoder(8);
  const auto ds = synth::generate_training_set({"A", "KLR", 2.0, 40, 120, 1001}, 50);
  const TrainingEmbeddings cached(ds, encoder);
  SplitMix64 rng(6);
  for (int i = 0; i < 20; ++i) {
    const auto e = embed({"q", random_residues(rng, 30)}, encoder);
    CHECK(std::abs(cached.score(e) - functionality_score(e, cached.raw())) <= 1e-12);
  }
}
