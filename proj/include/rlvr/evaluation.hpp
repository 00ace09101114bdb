#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rlvr/geometry.hpp"

namespace rlvr {

struct EvalRecord {
  std::string example_id;
  std::vector<BoundingBox> pred_boxes;
  std::vector<BoundingBox> ref_boxes;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  double precision_at_iou = 0.0;
};

/// One example to evaluate: predictions in emission order plus references.
struct EvalInput {
  std::string example_id;
  std::vector<BoundingBox> pred_boxes;
  std::vector<BoundingBox> ref_boxes;
  std::size_t response_chars = 0;
};

struct CorpusSummary {
  double map_at_50 = 0.0;
  std::vector<EvalRecord> records;
  double mean_response_length = 0.0;
};

/// Per-example precision under greedy matching: 1 when there are neither
/// predictions nor references, else tp / (tp + fp) (0 without predictions).
double example_precision(std::size_t tp, std::size_t fp, std::size_t fn);

/// Greedy matching in emission order. Each prediction takes the highest-IoU
/// still-unmatched reference whose IoU strictly exceeds the threshold.
/// Throws std::invalid_argument unless 0 < threshold < 1.
EvalRecord match_greedy(std::span<const BoundingBox> pred,
                        std::span<const BoundingBox> ref, double iou_threshold);

/// Mean per-example precision over the corpus at the given IoU threshold.
/// Throws std::invalid_argument("no examples") on an empty corpus.
CorpusSummary map_at_threshold(std::span<const EvalInput> corpus, double iou_threshold);

inline CorpusSummary map_at_50(std::span<const EvalInput> corpus) {
  return map_at_threshold(corpus, 0.5);
}

}  // namespace rlvr
