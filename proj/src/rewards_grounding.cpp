#include "rlvr/rewards_grounding.hpp"

#include "rlvr/assignment.hpp"

namespace rlvr {

SoftF1Breakdown soft_f1_reward(std::span<const BoundingBox> pred,
                               std::span<const BoundingBox> ref) {
  SoftF1Breakdown out;
  out.n_pred = pred.size();
  out.n_ref = ref.size();
  if (pred.empty() && ref.empty()) {
    out.precision = out.recall = out.f1 = 1.0;
    return out;
  }
  if (pred.empty() || ref.empty()) return out;

  ProfitMatrix profit(pred.size(), ref.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    for (std::size_t j = 0; j < ref.size(); ++j) profit(i, j) = iou(pred[i], ref[j]);
  }
  out.soft_tp = hungarian_max(profit).total_profit;
  out.precision = out.soft_tp / static_cast<double>(out.n_pred);
  out.recall = out.soft_tp / static_cast<double>(out.n_ref);
  const double denom = out.precision + out.recall;
  out.f1 = denom > 0.0 ? 2.0 * out.precision * out.recall / denom : 0.0;
  return out;
}

double grounding_response_reward(const ModelResponse& resp,
                                 std::span<const BoundingBox> ref) {
  if (!resp.final_answer) return 0.0;
  const BoxAnswer parsed = parse_boxes(*resp.final_answer);
  return soft_f1_reward(parsed.boxes, ref).f1;
}

}  // namespace rlvr
