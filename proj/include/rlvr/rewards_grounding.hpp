#pragma once

#include <cstddef>
#include <span>

#include "rlvr/boxformat.hpp"
#include "rlvr/geometry.hpp"

namespace rlvr {

struct SoftF1Breakdown {
  double soft_tp = 0.0;  ///< Sum of IoUs over Hungarian-matched pairs.
  std::size_t n_pred = 0;
  std::size_t n_ref = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// Hungarian-matched soft-F1 between predicted and reference boxes.
///
/// Matched pairs count as fractional true positives weighted by IoU;
/// leftover predictions and references are false positives and false
/// negatives. Empty versus empty scores f1 = 1.
SoftF1Breakdown soft_f1_reward(std::span<const BoundingBox> pred,
                               std::span<const BoundingBox> ref);

/// Scalar grounding reward for one generation: 0 without a final answer,
/// otherwise soft-F1 of the boxes parsed from it.
double grounding_response_reward(const ModelResponse& resp,
                                 std::span<const BoundingBox> ref);

}  // namespace rlvr
