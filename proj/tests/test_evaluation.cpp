#include <gtest/gtest.h>

#include <algorithm>
#include <vector>

#include "rlvr/evaluation.hpp"
#include "rlvr/random.hpp"
#include "rlvr/rewards_grounding.hpp"
#include "support/oracles.hpp"

namespace rlvr {
namespace {

const BoundingBox kA{0, 0, 0.5, 0.5};
const BoundingBox kB{0.25, 0.25, 0.75, 0.75};

TEST(MatchGreedy, WorkedExamples) {
  const std::vector<BoundingBox> a{kA};
  const EvalRecord same = match_greedy(a, a, 0.5);
  EXPECT_EQ(same.tp, 1u);
  EXPECT_EQ(same.fp, 0u);
  EXPECT_EQ(same.fn, 0u);

  const std::vector<BoundingBox> b{kB};
  const EvalRecord low = match_greedy(a, b, 0.5);
  EXPECT_EQ(low.tp, 0u);
  EXPECT_EQ(low.fp, 1u);
  EXPECT_EQ(low.fn, 1u);

  // IoU 0.9 and 0.8 against a unit-height reference strip.
  const std::vector<BoundingBox> ref{{0, 0, 1, 0.5}};
  const std::vector<BoundingBox> preds{{0, 0, 0.9, 0.5}, {0, 0, 0.8, 0.5}};
  ASSERT_NEAR(iou(preds[0], ref[0]), 0.9, 1e-12);
  ASSERT_NEAR(iou(preds[1], ref[0]), 0.8, 1e-12);
  const EvalRecord greedy = match_greedy(preds, ref, 0.5);
  EXPECT_EQ(greedy.tp, 1u);
  EXPECT_EQ(greedy.fp, 1u);
  EXPECT_EQ(greedy.fn, 0u);
  EXPECT_DOUBLE_EQ(greedy.precision_at_iou, 0.5);
}

TEST(MatchGreedy, ThresholdIsStrict) {
  // IoU exactly 0.5.
  const std::vector<BoundingBox> pred{{0, 0, 0.5, 1}};
  const std::vector<BoundingBox> ref{{0, 0, 1, 1}};
  ASSERT_DOUBLE_EQ(iou(pred[0], ref[0]), 0.5);
  EXPECT_EQ(match_greedy(pred, ref, 0.5).tp, 0u);
  EXPECT_THROW(match_greedy(pred, ref, 1.0), std::invalid_argument);
  EXPECT_THROW(match_greedy(pred, ref, 0.0), std::invalid_argument);
}

TEST(MatchGreedy, CountsAndMonotoneInThreshold) {
  Rng rng(41);
  for (int t = 0; t < 500; ++t) {
    std::vector<BoundingBox> pred, ref;
    const auto np = static_cast<std::size_t>(uniform01(rng) * 5);
    const auto nr = static_cast<std::size_t>(uniform01(rng) * 5);
    for (std::size_t i = 0; i < nr; ++i) ref.push_back(oracle::random_box(rng));
    for (std::size_t i = 0; i < np; ++i) {
      // Half of the predictions are jittered copies of references.
      if (!ref.empty() && uniform01(rng) < 0.5) {
        BoundingBox b = ref[i % ref.size()];
        b.x_max = std::min(1.0, b.x_max + 0.05 * uniform01(rng));
        pred.push_back(b);
      } else {
        pred.push_back(oracle::random_box(rng));
      }
    }
    std::size_t last_tp = pred.size() + 1;
    for (double th : {0.1, 0.3, 0.5, 0.7, 0.9}) {
      const EvalRecord r = match_greedy(pred, ref, th);
      EXPECT_EQ(r.tp + r.fp, pred.size());
      EXPECT_EQ(r.tp + r.fn, ref.size());
      EXPECT_LE(r.tp, last_tp);
      last_tp = r.tp;
    }
  }
}

TEST(ExamplePrecision, Conventions) {
  EXPECT_DOUBLE_EQ(example_precision(0, 0, 0), 1.0);
  EXPECT_DOUBLE_EQ(example_precision(0, 0, 2), 0.0);
  EXPECT_DOUBLE_EQ(example_precision(0, 3, 1), 0.0);
  EXPECT_DOUBLE_EQ(example_precision(1, 1, 0), 0.5);
}

TEST(MapAt50, WorkedExamples) {
  const std::vector<BoundingBox> a{kA};
  const std::vector<BoundingBox> b{kB};
  const std::vector<EvalInput> perfect{{"p", a, a, 10}};
  EXPECT_DOUBLE_EQ(map_at_50(perfect).map_at_50, 1.0);

  const std::vector<EvalInput> two{{"p", a, a, 10}, {"q", a, b, 20}};
  const CorpusSummary s = map_at_50(two);
  EXPECT_DOUBLE_EQ(s.map_at_50, 0.5);
  EXPECT_DOUBLE_EQ(s.mean_response_length, 15.0);
  ASSERT_EQ(s.records.size(), 2u);
  EXPECT_EQ(s.records[1].example_id, "q");

  EXPECT_THROW(map_at_50(std::vector<EvalInput>{}), std::invalid_argument);
}

TEST(MapAt50, SoftF1OfOneImpliesPerfectGreedyMatch) {
  Rng rng(42);
  for (int t = 0; t < 300; ++t) {
    std::vector<BoundingBox> ref;
    const auto n = static_cast<std::size_t>(uniform01(rng) * 5);
    for (std::size_t i = 0; i < n; ++i) ref.push_back(oracle::random_box(rng));
    auto pred = ref;
    std::shuffle(pred.begin(), pred.end(), rng);
    bool degenerate = false;
    for (const auto& box : ref) degenerate |= area(box) == 0.0;
    if (degenerate || soft_f1_reward(pred, ref).f1 != 1.0) continue;
    const EvalRecord r = match_greedy(pred, ref, 0.5);
    EXPECT_EQ(r.fp, 0u);
    EXPECT_EQ(r.fn, 0u);
  }
}

}  // namespace
}  // namespace rlvr
