#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "rlvr/grpo.hpp"
#include "rlvr/random.hpp"

namespace rlvr {
namespace {

TEST(ComputeAdvantages, WorkedExamples) {
  const std::vector<double> a = compute_advantages(std::vector<double>{1, 0}, 0.0);
  EXPECT_DOUBLE_EQ(a[0], 1.0);
  EXPECT_DOUBLE_EQ(a[1], -1.0);

  for (double v : compute_advantages(std::vector<double>{0.3, 0.3, 0.3}, 1e-6)) {
    EXPECT_DOUBLE_EQ(v, 0.0);
  }
  for (double v : compute_advantages(std::vector<double>{0.3, 0.3}, 0.0)) EXPECT_DOUBLE_EQ(v, 0.0);

  const std::vector<double> b = compute_advantages(std::vector<double>{3, 1, 1, 1}, 0.0);
  EXPECT_NEAR(b[0], 1.732051, 1e-6);
  for (int i = 1; i < 4; ++i) EXPECT_NEAR(b[static_cast<std::size_t>(i)], -0.577350, 1e-6);
}

TEST(ComputeAdvantages, RejectsDegenerateGroups) {
  EXPECT_THROW(compute_advantages(std::vector<double>{1.0}, 1e-6), std::invalid_argument);
  EXPECT_THROW(compute_advantages(std::vector<double>{1.0, 2.0}, -1.0), std::invalid_argument);
}

TEST(ComputeAdvantages, ZeroMeanUnitStd) {
  Rng rng(51);
  for (int t = 0; t < 10000; ++t) {
    const auto g = 2 + static_cast<std::size_t>(uniform01(rng) * 15);
    std::vector<double> r(g);
    for (auto& v : r) v = uniform01(rng) < 0.3 ? std::round(uniform01(rng)) : uniform(rng, -3, 3);
    if (std::all_of(r.begin(), r.end(), [&](double v) { return v == r[0]; })) continue;
    const auto adv = compute_advantages(r, 0.0);
    const double sum = std::accumulate(adv.begin(), adv.end(), 0.0);
    EXPECT_LT(std::abs(sum), 1e-9);
    double sq = 0;
    for (double v : adv) sq += v * v;
    EXPECT_NEAR(std::sqrt(sq / static_cast<double>(g)), 1.0, 1e-6);
  }
}

TEST(Ratio, WorkedExamples) {
  EXPECT_DOUBLE_EQ(ratio(-0.7, -0.7), 1.0);
  EXPECT_NEAR(ratio(-1.0 + std::log(2.0), -1.0), 2.0, 1e-12);
  EXPECT_NEAR(ratio(-1.2, -1.7), 1.648721, 1e-6);
}

TEST(ClippedTerm, WorkedExamples) {
  const GrpoConfig cfg{};
  EXPECT_DOUBLE_EQ(clipped_term(1.5, 1.0, cfg), 1.28);
  EXPECT_DOUBLE_EQ(clipped_term(1.0, 0.37, cfg), 0.37);
  EXPECT_DOUBLE_EQ(clipped_term(1.0, -2.5, cfg), -2.5);
  EXPECT_DOUBLE_EQ(clipped_term(0.5, -1.0, cfg), -0.8);
}

TEST(ClippedTerm, NeverExceedsUnclippedSurrogate) {
  const GrpoConfig cfg{};
  Rng rng(52);
  for (int t = 0; t < 1000000; ++t) {
    const double r = std::exp(uniform(rng, -3, 3));
    const double adv = uniform(rng, -4, 4);
    ASSERT_LE(clipped_term(r, adv, cfg), r * adv);
  }
}

TEST(KlLowVar, WorkedExamples) {
  EXPECT_DOUBLE_EQ(kl_low_var(-1.3, -1.3), 0.0);
  EXPECT_NEAR(kl_low_var(-2.0, -2.0 + std::log(2.0)), 0.306853, 1e-6);
  EXPECT_NEAR(kl_low_var(-2.0, -2.0 - std::log(2.0)), 0.193147, 1e-6);
}

TEST(KlLowVar, NonNegativeAndZeroOnlyAtEquality) {
  Rng rng(53);
  for (int t = 0; t < 1000000; ++t) {
    const double a = uniform(rng, -12, 0);
    const double b = uniform(rng, -12, 0);
    const double kl = kl_low_var(a, b);
    ASSERT_GE(kl, 0.0);
    if (a != b) {
      ASSERT_GT(kl, 0.0) << a << " " << b;
    }
  }
}

TEST(KlLowVar, ClampsExtremeLogRatios) {
  EXPECT_DOUBLE_EQ(kl_low_var(-200.0, 0.0), kKlValueClamp);
  EXPECT_DOUBLE_EQ(kl_low_var_dlogp(-200.0, 0.0), 0.0);
  EXPECT_TRUE(std::isfinite(kl_low_var(0.0, -1e6)));
}

TEST(KlLowVar, DerivativeMatchesFiniteDifference) {
  Rng rng(54);
  for (int t = 0; t < 1000; ++t) {
    const double a = uniform(rng, -5, 0), b = uniform(rng, -5, 0);
    const double h = 1e-6;
    const double fd = (kl_low_var(a + h, b) - kl_low_var(a - h, b)) / (2 * h);
    EXPECT_NEAR(kl_low_var_dlogp(a, b), fd, 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

// Two rollouts of two tokens each; values traced by hand:
//   A (adv +1): r = e^0.2 unclipped; r = 1 with KL(ln 2) = 0.306853.
//   B (adv -1): r = 1 with KL(-ln 2) = 0.193147; r = e^-0.5 clipped to 0.8.
RolloutGroup hand_group() {
  RolloutGroup g;
  Rollout a;
  a.token_ids = {0, 1};
  a.logp_current = {-1.0, -2.0};
  a.logp_old = {-1.2, -2.0};
  a.logp_ref = {-1.0, -2.0 + std::log(2.0)};
  a.advantage = 1.0;
  Rollout b;
  b.token_ids = {2, 3};
  b.logp_current = {-0.5, -3.0};
  b.logp_old = {-0.5, -2.5};
  b.logp_ref = {-0.5 - std::log(2.0), -3.0};
  b.advantage = -1.0;
  g.responses = {a, b};
  return g;
}

TEST(GrpoLoss, HandTraceOfTwoRollouts) {
  const std::vector<RolloutGroup> groups{hand_group()};
  const GrpoLoss out = grpo_loss(groups, GrpoConfig{});
  const double seq_a = (std::exp(0.2) + (1.0 - 0.01 * 0.30685281944005466)) / 2;  // 1.109167
  const double seq_b = (-(1.0 + 0.01 * 0.19314718055994529) - 0.8) / 2;           // -0.900966
  EXPECT_NEAR(out.loss, -(seq_a + seq_b) / 2, 1e-12);
  EXPECT_NEAR(out.loss, -0.104101, 1e-6);
  EXPECT_EQ(out.diagnostics.tokens, 4u);
  EXPECT_DOUBLE_EQ(out.diagnostics.clip_fraction, 0.25);
  EXPECT_NEAR(out.diagnostics.mean_kl, 0.125, 1e-12);
}

TEST(GrpoLoss, ZeroAdvantageAtReferenceIsZero) {
  RolloutGroup g = hand_group();
  for (auto& r : g.responses) {
    r.advantage = 0.0;
    r.logp_old = r.logp_current;
    r.logp_ref = r.logp_current;
  }
  const std::vector<RolloutGroup> groups{g};
  EXPECT_DOUBLE_EQ(grpo_loss(groups, GrpoConfig{}).loss, 0.0);
}

TEST(GrpoLoss, BetaZeroIsPureClippedSurrogate) {
  GrpoConfig cfg{};
  cfg.kl_coef = 0.0;
  const std::vector<RolloutGroup> groups{hand_group()};
  double expect = 0;
  for (const auto& r : groups[0].responses) {
    double s = 0;
    for (std::size_t t = 0; t < r.token_ids.size(); ++t) {
      s += clipped_term(ratio(r.logp_current[t], r.logp_old[t]), r.advantage, cfg);
    }
    expect += s / static_cast<double>(r.token_ids.size());
  }
  EXPECT_NEAR(grpo_loss(groups, cfg).loss, -expect / 2, 1e-15);
}

TEST(GrpoLoss, RejectsEmptyResponses) {
  RolloutGroup g = hand_group();
  g.responses[1] = Rollout{};
  const std::vector<RolloutGroup> groups{g};
  EXPECT_THROW(grpo_loss(groups, GrpoConfig{}), std::invalid_argument);
}

TEST(GrpoLoss, LogpGradientsMatchFiniteDifferences) {
  const GrpoConfig cfg{};
  Rng rng(55);
  std::vector<RolloutGroup> groups(3);
  for (auto& g : groups) {
    for (int i = 0; i < 4; ++i) {
      Rollout r;
      const auto n = 1 + static_cast<std::size_t>(uniform01(rng) * 5);
      for (std::size_t t = 0; t < n; ++t) {
        r.token_ids.push_back(static_cast<int>(t));
        r.logp_old.push_back(uniform(rng, -3, -0.1));
        r.logp_current.push_back(r.logp_old.back() + uniform(rng, -0.4, 0.4));
        r.logp_ref.push_back(r.logp_old.back() + uniform(rng, -1, 1));
      }
      r.reward = uniform01(rng);
      g.responses.push_back(r);
    }
    compute_advantages(g, cfg.advantage_std_epsilon);
  }
  const auto grads = grpo_loss_logp_gradients(groups, cfg);
  const double h = 1e-6;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t i = 0; i < groups[g].responses.size(); ++i) {
      for (std::size_t t = 0; t < groups[g].responses[i].token_ids.size(); ++t) {
        auto up = groups, down = groups;
        up[g].responses[i].logp_current[t] += h;
        down[g].responses[i].logp_current[t] -= h;
        const double fd = (grpo_loss(up, cfg).loss - grpo_loss(down, cfg).loss) / (2 * h);
        EXPECT_NEAR(grads[g][i][t], fd, 1e-6 * std::max(1.0, std::abs(fd)));
      }
    }
  }
}

TEST(GrpoLoss, AdvantagesAreScaleInvariant) {
  const std::vector<double> r{0.1, 0.4, 0.9, 0.2};
  std::vector<double> scaled;
  for (double v : r) scaled.push_back(7.0 * v + 3.0);
  const auto a = compute_advantages(r, 0.0);
  const auto b = compute_advantages(scaled, 0.0);
  for (std::size_t i = 0; i < r.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(GrpoConfig, Validation) {
  GrpoConfig cfg{};
  EXPECT_NO_THROW(validate(cfg));
  cfg.group_size = 1;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg = GrpoConfig{};
  cfg.clip_low = 1.5;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
  cfg = GrpoConfig{};
  cfg.kl_coef = -0.1;
  EXPECT_THROW(validate(cfg), std::invalid_argument);
}

}  // namespace
}  // namespace rlvr
