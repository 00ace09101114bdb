#pragma once

#include <cstddef>
#include <utility>
#include <vector>

namespace rlvr {

/// Row-major dense matrix of profits; rows are predictions, columns references.
class ProfitMatrix {
 public:
  ProfitMatrix() = default;
  ProfitMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  ProfitMatrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0 || cols_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

struct Matching {
  /// (pred_index, ref_index), sorted by pred_index.
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  double total_profit = 0.0;
  std::vector<std::size_t> unmatched_preds;
  std::vector<std::size_t> unmatched_refs;
};

/// Maximum-profit one-to-one assignment (Hungarian algorithm, O(n^3)).
///
/// Rectangular inputs are zero-padded to square, so exactly min(P, R) pairs
/// are returned; pairs of zero profit may appear. Among optimal assignments
/// the lexicographically smallest (pred, ref) pair sequence is returned.
/// Throws std::invalid_argument on non-finite entries.
Matching hungarian_max(const ProfitMatrix& profit);

}  // namespace rlvr
