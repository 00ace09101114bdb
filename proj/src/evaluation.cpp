#include "rlvr/evaluation.hpp"

#include <stdexcept>

namespace rlvr {

double example_precision(std::size_t tp, std::size_t fp, std::size_t fn) {
  if (tp + fp == 0) return fn == 0 ? 1.0 : 0.0;
  return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

EvalRecord match_greedy(std::span<const BoundingBox> pred,
                        std::span<const BoundingBox> ref, double iou_threshold) {
  if (!(iou_threshold > 0.0 && iou_threshold < 1.0)) {
    throw std::invalid_argument("match_greedy: threshold must lie in (0, 1)");
  }
  EvalRecord rec;
  rec.pred_boxes.assign(pred.begin(), pred.end());
  rec.ref_boxes.assign(ref.begin(), ref.end());

  std::vector<char> taken(ref.size(), 0);
  for (const auto& p : pred) {
    std::size_t best = ref.size();
    double best_iou = iou_threshold;
    for (std::size_t j = 0; j < ref.size(); ++j) {
      if (taken[j]) continue;
      const double v = iou(p, ref[j]);
      if (v > best_iou) {
        best_iou = v;
        best = j;
      }
    }
    if (best < ref.size()) {
      taken[best] = 1;
      ++rec.tp;
    } else {
      ++rec.fp;
    }
  }
  rec.fn = ref.size() - rec.tp;
  rec.precision_at_iou = example_precision(rec.tp, rec.fp, rec.fn);
  return rec;
}

CorpusSummary map_at_threshold(std::span<const EvalInput> corpus, double iou_threshold) {
  if (corpus.empty()) throw std::invalid_argument("no examples");
  CorpusSummary summary;
  summary.records.reserve(corpus.size());
  double precision_sum = 0.0;
  double chars_sum = 0.0;
  for (const auto& ex : corpus) {
    EvalRecord rec = match_greedy(ex.pred_boxes, ex.ref_boxes, iou_threshold);
    rec.example_id = ex.example_id;
    precision_sum += rec.precision_at_iou;
    chars_sum += static_cast<double>(ex.response_chars);
    summary.records.push_back(std::move(rec));
  }
  const auto n = static_cast<double>(corpus.size());
  summary.map_at_50 = precision_sum / n;
  summary.mean_response_length = chars_sum / n;
  return summary;
}

}  // namespace rlvr
