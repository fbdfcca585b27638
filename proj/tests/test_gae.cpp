#include <gtest/gtest.h>

#include <cmath>

#include "roomprobe/nn/rng.hpp"
#include "roomprobe/ppo/gae.hpp"

using namespace roomprobe;
using ppo::compute_gae;
using ppo::discounted_return;

namespace {

// Independent O(T^2) oracle: A_t = sum over k >= t of (gamma*lambda)^(k-t)
// * delta_k, truncated after the first done at or past t. Written against
// the definition, not the recursion under test.
std::vector<double> gae_bruteforce(const std::vector<double>& r, const std::vector<double>& v,
                                   const std::vector<uint8_t>& d, double bootstrap, double gamma, double lambda) {
  const size_t T = r.size();
  std::vector<double> adv(T);
  for (size_t t = 0; t < T; ++t) {
    double acc = 0.0, w = 1.0;
    for (size_t k = t; k < T; ++k) {
      const double next_v = (k + 1 < T) ? v[k + 1] : bootstrap;
      const double delta = r[k] + gamma * next_v * (d[k] ? 0.0 : 1.0) - v[k];
      acc += w * delta;
      if (d[k]) break;
      w *= gamma * lambda;
    }
    adv[t] = acc;
  }
  return adv;
}

}  // namespace

TEST(DiscountedReturn, Arithmetic) {
  EXPECT_NEAR(discounted_return({-0.001, -0.001, 1.0}, 1.0), 0.998, 1e-15);
  EXPECT_DOUBLE_EQ(discounted_return({3.5, 100.0, -2.0}, 0.0), 3.5);
  EXPECT_NEAR(discounted_return({1.0, 1.0, 1.0}, 0.9), 2.71, 1e-12);
  EXPECT_THROW(discounted_return({1.0, std::nan("")}, 0.9), std::invalid_argument);
}

TEST(Gae, LambdaZeroCollapsesToOneStepDeltas) {
  nn::Rng rng(1);
  const int T = 12;
  std::vector<double> r(T), v(T);
  std::vector<uint8_t> d(T, 0);
  for (int t = 0; t < T; ++t) {
    r[t] = rng.normal();
    v[t] = rng.normal();
  }
  d[5] = 1;
  const double bootstrap = rng.normal();
  auto [adv, tgt] = compute_gae(r, v, d, bootstrap, 0.97, 0.0);
  for (int t = 0; t < T; ++t) {
    const double next_v = (t + 1 < T) ? v[t + 1] : bootstrap;
    const double delta = r[t] + 0.97 * next_v * (d[t] ? 0.0 : 1.0) - v[t];
    EXPECT_NEAR(adv[t], delta, 1e-14);
    EXPECT_NEAR(tgt[t], delta + v[t], 1e-14);
  }
}

TEST(Gae, SingleTerminalStep) {
  auto [adv, tgt] = compute_gae({1.0}, {0.4}, {1}, 0.0, 0.99, 0.95);
  EXPECT_NEAR(adv[0], 0.6, 1e-15);
  EXPECT_NEAR(tgt[0], 1.0, 1e-15);
}

TEST(Gae, LengthMismatchErrors) {
  EXPECT_THROW(compute_gae({1.0, 2.0}, {0.0}, {0, 0}, 0.0, 0.9, 0.9), std::invalid_argument);
}

TEST(Gae, MatchesBruteForceOracleOn1000RandomInstances) {
  nn::Rng rng(20240);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int T = 1 + static_cast<int>(rng.below(20));
    std::vector<double> r(T), v(T);
    std::vector<uint8_t> d(T);
    for (int t = 0; t < T; ++t) {
      r[t] = rng.range(-2.0, 2.0);
      v[t] = rng.range(-2.0, 2.0);
      d[t] = rng.bernoulli(0.15) ? 1 : 0;
    }
    const double bootstrap = rng.range(-2.0, 2.0);
    const double gamma = rng.range(0.8, 1.0);
    const double lambda = rng.range(0.0, 1.0);
    auto [adv, tgt] = compute_gae(r, v, d, bootstrap, gamma, lambda);
    auto oracle = gae_bruteforce(r, v, d, bootstrap, gamma, lambda);
    for (int t = 0; t < T; ++t) {
      worst = std::max(worst, std::abs(adv[t] - oracle[t]));
      ASSERT_NEAR(adv[t], oracle[t], 1e-12) << "trial " << trial << " t " << t;
      ASSERT_NEAR(tgt[t], oracle[t] + v[t], 1e-12);
    }
  }
  RecordProperty("max_abs_err", worst);
}

// Frozen values for one specific instance, computed with the brute-force
// oracle above: 5 steps, gamma=0.9, lambda=0.8.
TEST(Gae, FrozenFiveStepInstance) {
  const std::vector<double> r = {1.0, -0.5, 0.25, 2.0, -1.0};
  const std::vector<double> v = {0.2, 0.4, -0.1, 0.6, 0.3};
  const std::vector<uint8_t> d = {0, 0, 1, 0, 0};
  const double bootstrap = 0.7;
  auto [adv, tgt] = compute_gae(r, v, d, bootstrap, 0.9, 0.8);
  auto oracle = gae_bruteforce(r, v, d, bootstrap, 0.9, 0.8);
  for (int t = 0; t < 5; ++t) EXPECT_NEAR(adv[t], oracle[t], 1e-12);
  // delta_2 = 0.25 - (-0.1) = 0.35 ends its episode; delta_0/1 chain to it.
  EXPECT_NEAR(adv[2], 0.35, 1e-15);
  EXPECT_NEAR(adv[1], (-0.5 + 0.9 * -0.1 - 0.4) + 0.72 * 0.35, 1e-15);
}

TEST(Gae, LambdaOneFullEpisodeEqualsMonteCarloReturnToGo) {
  nn::Rng rng(5150);
  for (int trial = 0; trial < 200; ++trial) {
    const int T = 2 + static_cast<int>(rng.below(18));
    std::vector<double> r(T), v(T);
    std::vector<uint8_t> d(T, 0);
    d[T - 1] = 1;  // full episode, no bootstrapping
    for (int t = 0; t < T; ++t) {
      r[t] = rng.range(-1.0, 1.0);
      v[t] = rng.range(-1.0, 1.0);
    }
    const double gamma = rng.range(0.9, 1.0);
    auto [adv, tgt] = compute_gae(r, v, d, 0.0, gamma, 1.0);
    for (int t = 0; t < T; ++t) {
      double g = 0.0, w = 1.0;
      for (int k = t; k < T; ++k) {
        g += w * r[k];
        w *= gamma;
      }
      ASSERT_NEAR(adv[t] + v[t], g, 1e-10) << "trial " << trial << " t " << t;
      ASSERT_NEAR(tgt[t], g, 1e-10);
    }
  }
}

TEST(Gae, EpisodeBoundaryIsolation) {
  // Advantages after a done never depend on rewards before it.
  nn::Rng rng(777);
  const int T = 16;
  std::vector<double> r(T), v(T);
  std::vector<uint8_t> d(T, 0);
  d[7] = 1;
  for (int t = 0; t < T; ++t) {
    r[t] = rng.normal();
    v[t] = rng.normal();
  }
  auto [adv1, tgt1] = compute_gae(r, v, d, 0.3, 0.99, 0.95);
  for (int t = 0; t <= 7; ++t) r[t] += rng.normal();  // perturb pre-boundary rewards
  auto [adv2, tgt2] = compute_gae(r, v, d, 0.3, 0.99, 0.95);
  for (int t = 8; t < T; ++t) {
    EXPECT_DOUBLE_EQ(adv1[t], adv2[t]);
    EXPECT_DOUBLE_EQ(tgt1[t], tgt2[t]);
  }
  EXPECT_NE(adv1[0], adv2[0]);
}

TEST(Normalization, MeanZeroStdOne) {
  nn::Rng rng(31);
  std::vector<float> a(2048);
  for (auto& x : a) x = static_cast<float>(rng.range(-3.0, 9.0));
  ppo::normalize_advantages(a);
  double mean = 0.0;
  for (float x : a) mean += x;
  mean /= a.size();
  double var = 0.0;
  for (float x : a) var += (x - mean) * (x - mean);
  var /= a.size();
  EXPECT_LT(std::abs(mean), 1e-6);
  EXPECT_NEAR(std::sqrt(var), 1.0, 1e-3);
}
