#include "rolealign/assignment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <string>

#include "rolealign/errors.hpp"

namespace rolealign {

CostMatrix::CostMatrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

CostMatrix::CostMatrix(const Eigen::MatrixXd& m)
    : rows_(static_cast<std::size_t>(m.rows())), cols_(static_cast<std::size_t>(m.cols())),
      data_(rows_ * cols_) {
  for (std::size_t i = 0; i < rows_; ++i) {
    for (std::size_t j = 0; j < cols_; ++j) data_[i * cols_ + j] = m(i, j);
  }
}

CostMatrix::CostMatrix(std::initializer_list<std::initializer_list<double>> rows)
    : rows_(rows.size()), cols_(rows.size() ? rows.begin()->size() : 0) {
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw InputError("CostMatrix: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

void CostMatrix::validate() const {
  if (rows_ == 0) throw InputError("CostMatrix: no rows");
  if (rows_ > cols_) {
    throw InputError("CostMatrix: " + std::to_string(rows_) + " rows exceed " +
                     std::to_string(cols_) + " columns");
  }
  for (std::size_t k = 0; k < data_.size(); ++k) {
    if (!std::isfinite(data_[k])) {
      throw InputError("CostMatrix: non-finite entry at (" + std::to_string(k / cols_) + ", " +
                       std::to_string(k % cols_) + ")");
    }
  }
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Square problem in row-major order; returns row -> column and the duals.
struct SquareSolution {
  std::vector<int> col_of_row;
  std::vector<double> u, v;  // row / column potentials, 1-based
};

SquareSolution solve_square(const std::vector<double>& c, std::size_t n) {
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> row_of_col(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    row_of_col[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = row_of_col[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      const double* row = &c[(i0 - 1) * n];
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[row_of_col[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (row_of_col[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      row_of_col[j0] = row_of_col[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  SquareSolution out;
  out.col_of_row.assign(n, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    out.col_of_row[row_of_col[j] - 1] = static_cast<int>(j - 1);
  }
  out.u = std::move(u);
  out.v = std::move(v);
  return out;
}

// Every optimal assignment uses only tight (zero reduced cost) edges of an
// optimal dual. Walk the real rows in order and move each to the smallest tight
// column that still admits a tight perfect matching for the unfixed rows.
void lexicographic_tiebreak(const std::vector<double>& c, std::size_t n, std::size_t real_rows,
                            SquareSolution& sol, double tol) {
  auto tight = [&](std::size_t i, std::size_t j) {
    return c[i * n + j] - sol.u[i + 1] - sol.v[j + 1] <= tol;
  };
  std::size_t tight_edges = 0;
  for (std::size_t i = 0; i < real_rows; ++i) {
    for (std::size_t j = 0; j < n; ++j) tight_edges += tight(i, j) ? 1 : 0;
  }
  if (tight_edges == real_rows) return;  // unique optimum on the real rows

  const int size = static_cast<int>(n);
  std::vector<int>& col_of_row = sol.col_of_row;
  std::vector<int> row_of_col(n);
  for (int r = 0; r < size; ++r) row_of_col[col_of_row[r]] = r;

  std::vector<int> pred_row(n);
  std::vector<char> seen(n);
  for (int i = 0; i < static_cast<int>(real_rows); ++i) {
    const int current = col_of_row[i];
    for (int cand = 0; cand < current; ++cand) {
      if (!tight(i, cand)) continue;
      const int holder = row_of_col[cand];
      if (holder < i) continue;  // owned by a fixed row
      // Re-home `holder` along tight edges, ending at the column row i releases.
      std::fill(seen.begin(), seen.end(), 0);
      std::fill(pred_row.begin(), pred_row.end(), -1);
      std::queue<int> frontier;
      frontier.push(holder);
      seen[holder] = 1;
      int end_row = -1;
      while (!frontier.empty() && end_row < 0) {
        const int r = frontier.front();
        frontier.pop();
        for (int j = 0; j < size; ++j) {
          if (j == cand || j == col_of_row[r] || !tight(r, j)) continue;
          if (j == current) {
            end_row = r;
            break;
          }
          const int next = row_of_col[j];
          if (next <= i || seen[next]) continue;
          seen[next] = 1;
          pred_row[next] = r;
          frontier.push(next);
        }
      }
      if (end_row < 0) continue;
      // Each row on the path takes its successor's column; end_row takes `current`.
      int give = current;
      for (int r = end_row; r >= 0; r = pred_row[r]) {
        const int old = col_of_row[r];
        col_of_row[r] = give;
        row_of_col[give] = r;
        give = old;
      }
      col_of_row[i] = cand;
      row_of_col[cand] = i;
      break;
    }
  }
}

}  // namespace

Assignment hungarian(const CostMatrix& cost) {
  cost.validate();
  const std::size_t rows = cost.rows();
  const std::size_t n = cost.cols();
  double max_entry = -kInf;
  double max_abs = 0.0;
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      max_entry = std::max(max_entry, cost(i, j));
      max_abs = std::max(max_abs, std::abs(cost(i, j)));
    }
  }
  const double sentinel = max_entry + 1.0;
  std::vector<double> c(n * n, sentinel);
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < n; ++j) c[i * n + j] = cost(i, j);
  }
  SquareSolution sol = solve_square(c, n);
  lexicographic_tiebreak(c, n, rows, sol, 1e-10 * (1.0 + max_abs));

  Assignment out;
  out.mapping.assign(sol.col_of_row.begin(), sol.col_of_row.begin() + rows);
  for (std::size_t i = 0; i < rows; ++i) out.total_cost += cost(i, out.mapping[i]);
  return out;
}

SinkhornResult sinkhorn_normalize(const Eigen::MatrixXd& q, int max_iters, double tol) {
  if (q.rows() != q.cols() || q.rows() == 0) {
    throw InputError("sinkhorn_normalize: expected a non-empty square matrix");
  }
  if (!q.allFinite()) throw InputError("sinkhorn_normalize: non-finite entry");
  if ((q.array() < 0.0).any()) throw InputError("sinkhorn_normalize: negative entry");
  if ((q.rowwise().sum().array() <= 0.0).any() || (q.colwise().sum().array() <= 0.0).any()) {
    throw ConvergenceError("sinkhorn_normalize: a row or column has zero mass");
  }
  auto deviation = [](const Eigen::MatrixXd& s) {
    const double r = (s.rowwise().sum().array() - 1.0).abs().maxCoeff();
    const double c = (s.colwise().sum().array() - 1.0).abs().maxCoeff();
    return std::max(r, c);
  };

  SinkhornResult out;
  out.matrix = q;
  out.max_deviation = deviation(out.matrix);
  while (out.max_deviation > tol && out.iterations < max_iters) {
    out.matrix.array().colwise() /= out.matrix.rowwise().sum().array();
    out.matrix.array().rowwise() /= out.matrix.colwise().sum().array();
    ++out.iterations;
    out.max_deviation = deviation(out.matrix);
  }
  out.converged = out.max_deviation <= tol;
  return out;
}

}  // namespace rolealign
