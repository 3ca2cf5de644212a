#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include <Eigen/Core>

namespace rolealign {

// Dense rows x cols cost matrix with rows <= cols and finite entries.
class CostMatrix {
 public:
  CostMatrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  explicit CostMatrix(const Eigen::MatrixXd& m);
  CostMatrix(std::initializer_list<std::initializer_list<double>> rows);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }
  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }

  // Throws InputError on a non-finite entry, rows == 0 or rows > cols.
  void validate() const;

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<double> data_;
};

// mapping[i] is the column assigned to row i; entries are distinct.
struct Assignment {
  std::vector<int> mapping;
  double total_cost = 0.0;
};

// Minimum-cost injective assignment of rows to columns (shortest augmenting
// path, O(n^2 m)). Among equal-cost optima the lexicographically smallest
// mapping is returned. Rectangular inputs are padded with dummy rows costing
// max entry + 1.
Assignment hungarian(const CostMatrix& cost);

struct SinkhornResult {
  Eigen::MatrixXd matrix;
  int iterations = 0;
  bool converged = false;
  double max_deviation = 0.0;  // max |row or column sum - 1| at exit
};

// Alternating row / column normalization towards a doubly-stochastic matrix.
// Throws InputError for non-square or negative input and ConvergenceError when
// a row or column has zero mass. Reaching max_iters is reported, not thrown.
SinkhornResult sinkhorn_normalize(const Eigen::MatrixXd& q, int max_iters = 1000,
                                  double tol = 1e-6);

}  // namespace rolealign
