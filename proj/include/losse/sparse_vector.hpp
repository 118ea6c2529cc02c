#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace losse {

using DenseVector = Eigen::VectorXd;

// A vector in R^dim stored as strictly increasing indices with their values.
struct SparseVector {
  int dim = 0;
  std::vector<int> indices;
  std::vector<double> values;

  std::size_t nnz() const { return indices.size(); }
  bool empty() const { return indices.empty(); }

  // Throws ShapeError on out-of-range or unsorted indices, ValueError on
  // non-finite values.
  void validate() const;

  DenseVector to_dense() const;
  static SparseVector from_dense(const DenseVector& x);

  double dot(const DenseVector& x) const;

  friend bool operator==(const SparseVector&, const SparseVector&) = default;
};

double l1_distance(const SparseVector& a, const SparseVector& b);

}  // namespace losse
