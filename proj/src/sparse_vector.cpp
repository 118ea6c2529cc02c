#include "losse/sparse_vector.hpp"

#include <cmath>
#include <string>

#include "losse/errors.hpp"

namespace losse {

void SparseVector::validate() const {
  if (dim <= 0) throw ShapeError("sparse vector dimension must be positive");
  if (indices.size() != values.size()) {
    throw ShapeError("sparse vector has " + std::to_string(indices.size()) +
                     " indices but " + std::to_string(values.size()) + " values");
  }
  for (std::size_t k = 0; k < indices.size(); ++k) {
    if (indices[k] < 0 || indices[k] >= dim) {
      throw ShapeError("sparse index " + std::to_string(indices[k]) + " outside [0, " +
                       std::to_string(dim) + ")");
    }
    if (k > 0 && indices[k] <= indices[k - 1]) {
      throw ShapeError("sparse indices must be strictly increasing");
    }
    if (!std::isfinite(values[k])) throw ValueError("sparse vector has a non-finite value");
  }
}

DenseVector SparseVector::to_dense() const {
  DenseVector out = DenseVector::Zero(dim);
  for (std::size_t k = 0; k < indices.size(); ++k) out[indices[k]] = values[k];
  return out;
}

SparseVector SparseVector::from_dense(const DenseVector& x) {
  SparseVector out;
  out.dim = static_cast<int>(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (x[i] != 0.0) {
      out.indices.push_back(static_cast<int>(i));
      out.values.push_back(x[i]);
    }
  }
  return out;
}

double SparseVector::dot(const DenseVector& x) const {
  if (x.size() != dim) throw ShapeError("dot: dimension mismatch");
  double acc = 0.0;
  for (std::size_t k = 0; k < indices.size(); ++k) acc += values[k] * x[indices[k]];
  return acc;
}

double l1_distance(const SparseVector& a, const SparseVector& b) {
  if (a.dim != b.dim) throw ShapeError("l1_distance: dimension mismatch");
  double acc = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.nnz() || j < b.nnz()) {
    if (j >= b.nnz() || (i < a.nnz() && a.indices[i] < b.indices[j])) {
      acc += std::abs(a.values[i++]);
    } else if (i >= a.nnz() || b.indices[j] < a.indices[i]) {
      acc += std::abs(b.values[j++]);
    } else {
      acc += std::abs(a.values[i++] - b.values[j++]);
    }
  }
  return acc;
}

}  // namespace losse
