#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "rlvr/boxformat.hpp"
#include "rlvr/evaluation.hpp"
#include "rlvr/random.hpp"
#include "rlvr/rewards_grounding.hpp"
#include "support/oracles.hpp"

namespace rlvr {
namespace {

std::vector<BoundingBox> random_boxes(Rng& rng, std::size_t max_n) {
  const auto n = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(max_n + 1));
  std::vector<BoundingBox> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(oracle::random_box(rng));
  return out;
}

TEST(SoftF1, WorkedExamples) {
  const std::vector<BoundingBox> a{{0, 0, 0.5, 0.5}};
  EXPECT_DOUBLE_EQ(soft_f1_reward(a, a).f1, 1.0);

  const std::vector<BoundingBox> b{{0.25, 0.25, 0.75, 0.75}};
  const SoftF1Breakdown ab = soft_f1_reward(a, b);
  EXPECT_NEAR(ab.soft_tp, 0.142857, 1e-6);
  EXPECT_NEAR(ab.precision, 0.142857, 1e-6);
  EXPECT_NEAR(ab.recall, 0.142857, 1e-6);
  EXPECT_NEAR(ab.f1, 0.142857, 1e-6);

  const std::vector<BoundingBox> two{{0, 0, 0.5, 0.5}, {0.6, 0.6, 1, 1}};
  const SoftF1Breakdown t = soft_f1_reward(two, a);
  EXPECT_NEAR(t.soft_tp, 1.0, 1e-12);
  EXPECT_NEAR(t.precision, 0.5, 1e-12);
  EXPECT_NEAR(t.recall, 1.0, 1e-12);
  EXPECT_NEAR(t.f1, 0.666667, 1e-6);
}

TEST(SoftF1, EmptyConventions) {
  const std::vector<BoundingBox> none;
  const std::vector<BoundingBox> one{{0, 0, 0.5, 0.5}};
  EXPECT_DOUBLE_EQ(soft_f1_reward(none, none).f1, 1.0);
  EXPECT_DOUBLE_EQ(soft_f1_reward(none, one).f1, 0.0);
  EXPECT_DOUBLE_EQ(soft_f1_reward(one, none).f1, 0.0);
}

TEST(SoftF1, EqualsBruteForceOracle) {
  Rng rng(21);
  for (int t = 0; t < 500; ++t) {
    const auto pred = random_boxes(rng, 5);
    const auto ref = random_boxes(rng, 5);
    EXPECT_NEAR(soft_f1_reward(pred, ref).f1, oracle::brute_force_soft_f1(pred, ref), 1e-12);
  }
}

TEST(SoftF1, SwappingRolesTransposesPrecisionAndRecall) {
  Rng rng(22);
  for (int t = 0; t < 300; ++t) {
    const auto pred = random_boxes(rng, 5);
    const auto ref = random_boxes(rng, 5);
    const SoftF1Breakdown x = soft_f1_reward(pred, ref);
    const SoftF1Breakdown y = soft_f1_reward(ref, pred);
    EXPECT_NEAR(x.precision, y.recall, 1e-12);
    EXPECT_NEAR(x.recall, y.precision, 1e-12);
    EXPECT_NEAR(x.f1, y.f1, 1e-12);
    EXPECT_GE(x.f1, 0.0);
    EXPECT_LE(x.f1, 1.0);
    EXPECT_LE(x.soft_tp, static_cast<double>(std::min(x.n_pred, x.n_ref)) + 1e-12);
  }
}

// Boxes with sides of at least 0.3: the Lipschitz bound of IoU scales with
// the inverse box side, so the smoothness check uses non-tiny boxes.
std::vector<BoundingBox> sized_boxes(Rng& rng, std::size_t max_n) {
  const auto n = static_cast<std::size_t>(uniform01(rng) * static_cast<double>(max_n + 1));
  std::vector<BoundingBox> out;
  for (std::size_t i = 0; i < n; ++i) {
    const double w = uniform(rng, 0.3, 0.6), h = uniform(rng, 0.3, 0.6);
    const double x = uniform(rng, 0.0, 0.95 - w), y = uniform(rng, 0.05, 1.0 - h);
    out.push_back({x, y, x + w, y + h});
  }
  return out;
}

TEST(SoftF1, SmallPerturbationsChangeRewardSmoothly) {
  Rng rng(23);
  constexpr double kC = 20.0;
  for (int t = 0; t < 2000; ++t) {
    auto pred = sized_boxes(rng, 4);
    const auto ref = sized_boxes(rng, 4);
    if (pred.empty()) continue;
    const double eps = 0.01 * uniform01(rng);
    const double before = soft_f1_reward(pred, ref).f1;
    BoundingBox& b = pred[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(pred.size()))];
    b.x_max += eps;
    b.y_min -= eps;
    const double after = soft_f1_reward(pred, ref).f1;
    EXPECT_LE(std::abs(after - before), kC * eps + 1e-12);
  }
}

TEST(SoftF1, PositiveWhereThresholdedMapIsZero) {
  const std::vector<BoundingBox> pred{{0, 0, 0.5, 0.5}};
  const std::vector<BoundingBox> ref{{0.25, 0.25, 0.75, 0.75}};
  EXPECT_GT(soft_f1_reward(pred, ref).f1, 0.0);
  const std::vector<EvalInput> corpus{{"x", pred, ref, 0}};
  EXPECT_DOUBLE_EQ(map_at_50(corpus).map_at_50, 0.0);
}

TEST(SoftF1, ExactMatchIffReward1) {
  const std::vector<BoundingBox> a{{0, 0, 0.5, 0.5}, {0.5, 0.5, 1, 1}};
  const std::vector<BoundingBox> b{{0.5, 0.5, 1, 1}, {0, 0, 0.5, 0.5}};
  EXPECT_DOUBLE_EQ(soft_f1_reward(a, b).f1, 1.0);
  const std::vector<BoundingBox> c{{0, 0, 0.5, 0.5}, {0.5, 0.5, 1, 0.99}};
  EXPECT_LT(soft_f1_reward(a, c).f1, 1.0);
}

TEST(GroundingResponseReward, WorkedExamples) {
  const std::vector<BoundingBox> ref{{0, 0, 0.5, 0.5}};
  EXPECT_DOUBLE_EQ(grounding_response_reward(extract_final_answer("thinking forever", true), ref), 0.0);
  EXPECT_GE(grounding_response_reward(
                extract_final_answer("…</think>[0.00, 0.00, 0.50, 0.50]", true), ref),
            0.99);
  EXPECT_DOUBLE_EQ(grounding_response_reward(extract_final_answer("no boxes found", false), ref),
                   0.0);
}

}  // namespace
}  // namespace rlvr
