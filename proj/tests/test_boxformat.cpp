#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rlvr/boxformat.hpp"
#include "rlvr/random.hpp"
#include "support/oracles.hpp"

namespace rlvr {
namespace {

TEST(SerializeBoxes, FormatExamplesAreBitExact) {
  const std::vector<BoundingBox> one{{0, 0, 0.5, 0.5}};
  EXPECT_EQ(serialize_boxes(one), "[0.00, 0.00, 0.50, 0.50]");
  EXPECT_EQ(serialize_boxes({}), "");
  const std::vector<BoundingBox> two{{0, 0, 0.5, 0.5}, {0.6, 0.6, 1, 1}};
  EXPECT_EQ(serialize_boxes(two), "[0.00, 0.00, 0.50, 0.50] and [0.60, 0.60, 1.00, 1.00]");
}

TEST(ParseBoxes, WorkedExamples) {
  const BoxAnswer a = parse_boxes("[0.00, 0.00, 0.50, 0.50]");
  ASSERT_EQ(a.boxes.size(), 1u);
  EXPECT_EQ(a.boxes[0], (BoundingBox{0, 0, 0.5, 0.5}));
  EXPECT_TRUE(a.parse_warnings.empty());

  const BoxAnswer b =
      parse_boxes("The nodule is at [0.10,0.20,0.30,0.40] and [0.50, 0.55, 0.70, 0.80].");
  ASSERT_EQ(b.boxes.size(), 2u);
  EXPECT_EQ(b.boxes[0], (BoundingBox{0.10, 0.20, 0.30, 0.40}));
  EXPECT_EQ(b.boxes[1], (BoundingBox{0.50, 0.55, 0.70, 0.80}));

  const BoxAnswer c = parse_boxes("[0.9, 0.9, 0.1, 0.1]");
  EXPECT_TRUE(c.boxes.empty());
  EXPECT_EQ(c.parse_warnings.size(), 1u);
}

TEST(ParseBoxes, WrongArityWarnsAndGarbageIsIgnored) {
  const BoxAnswer a = parse_boxes("[0.1, 0.2, 0.3] then [abc] and [0.1, 0.1, 0.2, 0.2]");
  ASSERT_EQ(a.boxes.size(), 1u);
  EXPECT_EQ(a.parse_warnings.size(), 1u);
  EXPECT_TRUE(parse_boxes("no boxes found").boxes.empty());
  EXPECT_TRUE(parse_boxes("").boxes.empty());
}

TEST(ParseBoxes, RoundTripOfRandomListsWithinTwoDecimals) {
  Rng rng(2024);
  double max_err = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const auto n = static_cast<std::size_t>(uniform01(rng) * 6);
    std::vector<BoundingBox> boxes;
    for (std::size_t k = 0; k < n; ++k) boxes.push_back(oracle::random_box(rng));
    const BoxAnswer back = parse_boxes(serialize_boxes(boxes));
    ASSERT_EQ(back.boxes.size(), boxes.size()) << serialize_boxes(boxes);
    for (std::size_t k = 0; k < n; ++k) {
      max_err = std::max({max_err, std::abs(back.boxes[k].x_min - boxes[k].x_min),
                          std::abs(back.boxes[k].y_min - boxes[k].y_min),
                          std::abs(back.boxes[k].x_max - boxes[k].x_max),
                          std::abs(back.boxes[k].y_max - boxes[k].y_max)});
    }
  }
  EXPECT_LE(max_err, 0.005);
}

TEST(ExtractFinalAnswer, WorkedExamples) {
  const ModelResponse t = extract_final_answer("reasoning…</think>[0.00, 0.00, 0.50, 0.50]", true);
  ASSERT_TRUE(t.final_answer.has_value());
  EXPECT_EQ(*t.final_answer, "[0.00, 0.00, 0.50, 0.50]");

  const ModelResponse n = extract_final_answer("[0.00, 0.00, 0.50, 0.50]", false);
  ASSERT_TRUE(n.final_answer.has_value());
  EXPECT_EQ(*n.final_answer, "[0.00, 0.00, 0.50, 0.50]");

  const ModelResponse m = extract_final_answer("endless reasoning with no delimiter", true);
  EXPECT_FALSE(m.final_answer.has_value());
  EXPECT_EQ(m.token_count, 5u);
}

TEST(ExtractFinalAnswer, UsesLastDelimiterAndIsIdempotent) {
  const ModelResponse r = extract_final_answer("a</think>b</think>  c d ", true);
  ASSERT_TRUE(r.final_answer.has_value());
  EXPECT_EQ(*r.final_answer, "c d");
  const ModelResponse again = extract_final_answer(*r.final_answer, false);
  EXPECT_EQ(again.final_answer, r.final_answer);
}

}  // namespace
}  // namespace rlvr
