#include "rlvr/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace rlvr {

ProfitMatrix::ProfitMatrix(std::size_t rows, std::size_t cols,
                           std::vector<double> values)
    : rows_(rows), cols_(cols), values_(std::move(values)) {
  if (values_.size() != rows_ * cols_) {
    throw std::invalid_argument("ProfitMatrix: value count does not match shape");
  }
}

namespace {

constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();

struct SquareCost {
  std::size_t n;
  std::vector<double> c;
  double operator()(std::size_t i, std::size_t j) const { return c[i * n + j]; }
};

struct Solution {
  std::vector<std::size_t> row_to_col;
  std::vector<double> u;  // row potentials
  std::vector<double> v;  // column potentials
};

// Shortest augmenting path Hungarian method with potentials.
Solution solve_min(const SquareCost& cost) {
  const std::size_t n = cost.n;
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based internally; index 0 is the virtual source column.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), min_to(n + 1);
  std::vector<std::size_t> col_owner(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);

  for (std::size_t i = 1; i <= n; ++i) {
    col_owner[0] = i;
    std::size_t j0 = 0;
    std::fill(min_to.begin(), min_to.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = col_owner[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < min_to[j]) {
          min_to[j] = cur;
          way[j] = j0;
        }
        if (min_to[j] < delta) {
          delta = min_to[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[col_owner[j]] += delta;
          v[j] -= delta;
        } else {
          min_to[j] -= delta;
        }
      }
      j0 = j1;
    } while (col_owner[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      col_owner[j0] = col_owner[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  Solution sol;
  sol.row_to_col.assign(n, kNone);
  for (std::size_t j = 1; j <= n; ++j) sol.row_to_col[col_owner[j] - 1] = j - 1;
  sol.u.assign(u.begin() + 1, u.end());
  sol.v.assign(v.begin() + 1, v.end());
  return sol;
}

// Every optimal assignment uses only edges with zero reduced cost under the
// optimal potentials, so the lexicographically smallest optimum is the
// lexicographically smallest perfect matching of that tight subgraph. Rows
// are fixed in order, each to its smallest feasible column; feasibility is an
// alternating cycle through the still-unfixed rows.
class TightGraphRefiner {
 public:
  TightGraphRefiner(const SquareCost& cost, Solution& sol, double tol)
      : cost_(cost), sol_(sol), tol_(tol), n_(cost.n),
        col_to_row_(n_), locked_(n_, 0), seen_(n_, 0) {
    for (std::size_t i = 0; i < n_; ++i) col_to_row_[sol_.row_to_col[i]] = i;
  }

  void refine(std::size_t rows_to_fix) {
    for (std::size_t i = 0; i < rows_to_fix; ++i) {
      const std::size_t current = sol_.row_to_col[i];
      for (std::size_t j = 0; j < current; ++j) {
        if (locked_[j] || !tight(i, j)) continue;
        std::fill(seen_.begin(), seen_.end(), 0);
        seen_[j] = 1;
        if (reroute(col_to_row_[j], current)) {
          sol_.row_to_col[i] = j;
          col_to_row_[j] = i;
          break;
        }
      }
      locked_[sol_.row_to_col[i]] = 1;
    }
  }

 private:
  bool tight(std::size_t i, std::size_t j) const {
    return std::abs(cost_(i, j) - sol_.u[i] - sol_.v[j]) <= tol_;
  }

  // Moves `row` to another tight column, ending at `target` (about to be
  // vacated). Applies the reassignment on success.
  bool reroute(std::size_t row, std::size_t target) {
    for (std::size_t c = 0; c < n_; ++c) {
      if (locked_[c] || seen_[c] || !tight(row, c)) continue;
      seen_[c] = 1;
      if (c == target || reroute(col_to_row_[c], target)) {
        sol_.row_to_col[row] = c;
        col_to_row_[c] = row;
        return true;
      }
    }
    return false;
  }

  const SquareCost& cost_;
  Solution& sol_;
  double tol_;
  std::size_t n_;
  std::vector<std::size_t> col_to_row_;
  std::vector<char> locked_;
  std::vector<char> seen_;
};

}  // namespace

Matching hungarian_max(const ProfitMatrix& profit) {
  const std::size_t P = profit.rows();
  const std::size_t R = profit.cols();
  Matching m;
  if (profit.empty()) {
    for (std::size_t i = 0; i < P; ++i) m.unmatched_preds.push_back(i);
    for (std::size_t j = 0; j < R; ++j) m.unmatched_refs.push_back(j);
    return m;
  }

  const std::size_t n = std::max(P, R);
  SquareCost cost{n, std::vector<double>(n * n, 1.0)};
  double scale = 1.0;
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t j = 0; j < R; ++j) {
      const double p = profit(i, j);
      if (!std::isfinite(p)) {
        throw std::invalid_argument("hungarian_max: non-finite profit entry");
      }
      cost.c[i * n + j] = 1.0 - p;
      scale = std::max(scale, std::abs(1.0 - p));
    }
  }

  Solution sol = solve_min(cost);
  TightGraphRefiner(cost, sol, 1e-9 * scale).refine(std::min(P, n));

  std::vector<char> ref_used(R, 0);
  for (std::size_t i = 0; i < P; ++i) {
    const std::size_t j = sol.row_to_col[i];
    if (j < R) {
      m.pairs.emplace_back(i, j);
      m.total_profit += profit(i, j);
      ref_used[j] = 1;
    } else {
      m.unmatched_preds.push_back(i);
    }
  }
  for (std::size_t j = 0; j < R; ++j) {
    if (!ref_used[j]) m.unmatched_refs.push_back(j);
  }
  return m;
}

}  // namespace rlvr
