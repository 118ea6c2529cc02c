#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "losse/sparse_vector.hpp"

namespace losse {

struct SparseSample {
  SparseVector phi;
  DenseVector y;
};

struct DenseSample {
  DenseVector phi;
  DenseVector y;
};

// Follow-The-Leader linear regression W = (A + eps I)^{-1} B over the memories
// A = sum phi phi^T and B = sum phi y^T of every sample seen so far.
//
// observe_sparse re-solves only the rows of W on the sample's support s,
// holding the other rows fixed:
//   W[s] = (A[s,s] + eps I)^{-1} (B[s] - A[s,~s] W[~s]).
// Its cost depends on |s| and on the row length of A, never on the number of
// samples observed.
//
// Not thread-safe for writers; concurrent const access is fine.
class FtlLearner {
 public:
  enum class Storage { Auto, Dense, SparseRows };

  // Auto picks Dense up to this many features and SparseRows above it.
  static constexpr int kDenseLimit = 8192;

  FtlLearner(int feature_dim, int target_dim, double epsilon = 1e-6,
             Storage storage = Storage::Auto);

  // Full re-solve of W after the rank-one update. Throws SolverError if
  // A + eps I is not positive definite.
  void observe_dense(const DenseVector& phi, const DenseVector& y);

  // Block update on the support of phi. An empty phi is a no-op that bumps
  // the warning counter.
  void observe_sparse(const SparseVector& phi, const DenseVector& y);

  DenseVector predict(const SparseVector& phi) const;
  DenseVector predict(const DenseVector& phi) const;

  // Frobenius norm of the gradient of the regularized objective restricted to
  // the rows in phi's support: (A[s,:] W + eps W[s] - B[s]).
  double block_residual(const SparseVector& phi) const;
  // A scale for block_residual: |A[s,:] W| + eps |W[s]| + |B[s]|, at least 1.
  double block_residual_scale(const SparseVector& phi) const;

  int feature_dim() const { return feature_dim_; }
  int target_dim() const { return target_dim_; }
  double epsilon() const { return epsilon_; }
  std::uint64_t steps_seen() const { return steps_; }
  std::uint64_t warnings() const { return warnings_; }
  Storage storage() const { return storage_; }

  std::uint64_t config_hash() const { return config_hash_; }
  void set_config_hash(std::uint64_t h) { config_hash_ = h; }

  const Eigen::MatrixXd& weights() const { return weights_; }
  const Eigen::MatrixXd& cross() const { return cross_; }
  double gram(int i, int j) const;
  Eigen::MatrixXd gram() const;

  // Versioned little-endian binary snapshot; load(save(x)) reproduces every
  // field bit for bit.
  void save(std::ostream& out) const;
  static FtlLearner load(std::istream& in);

  bool identical(const FtlLearner& other) const;

 private:
  using Row = std::vector<std::pair<int, double>>;

  void add_outer(const std::vector<int>& idx, const std::vector<double>& val);
  // Returns A[rows,:] * W as a |rows| x S matrix.
  Eigen::MatrixXd rows_times_weights(const std::vector<int>& rows) const;

  int feature_dim_;
  int target_dim_;
  double epsilon_;
  Storage storage_;
  std::uint64_t steps_ = 0;
  std::uint64_t warnings_ = 0;
  std::uint64_t config_hash_ = 0;

  Eigen::MatrixXd dense_gram_;  // Dense storage
  std::vector<Row> sparse_gram_;  // SparseRows storage, columns sorted per row
  Eigen::MatrixXd cross_;
  Eigen::MatrixXd weights_;
};

// Exact ridge solution (A + eps I)^{-1} B built from scratch over all samples.
// Throws ShapeError on inconsistent dimensions and SolverError when the system
// is not positive definite.
Eigen::MatrixXd solve_batch_oracle(std::span<const DenseSample> samples, double epsilon);
Eigen::MatrixXd solve_batch_oracle(std::span<const SparseSample> samples, double epsilon);

// Plain (mini-batch) gradient descent on the squared loss over the same
// features, the baseline FTL is compared against.
class SgdLearner {
 public:
  SgdLearner(int feature_dim, int target_dim, double learning_rate);

  void step(const SparseVector& phi, const DenseVector& y);
  void step(const DenseVector& phi, const DenseVector& y);
  // Gradient averaged over the batch, all evaluated at the current weights.
  void step_batch(std::span<const SparseSample> batch);

  DenseVector predict(const SparseVector& phi) const;
  DenseVector predict(const DenseVector& phi) const;

  double learning_rate() const { return learning_rate_; }
  const Eigen::MatrixXd& weights() const { return weights_; }
  Eigen::MatrixXd& weights() { return weights_; }

 private:
  Eigen::MatrixXd weights_;
  double learning_rate_;
};

double squared_loss(const DenseVector& prediction, const DenseVector& target);

// Online losses suffered before each update (predict, then reveal, then learn).
class RegretLedger {
 public:
  void record(double loss);
  // Records and returns the loss of the learner's current prediction.
  double record_prediction(const FtlLearner& learner, const SparseVector& phi, const DenseVector& y);
  double record_prediction(const FtlLearner& learner, const DenseVector& phi, const DenseVector& y);

  double cumulative_loss() const { return cumulative_; }
  const std::vector<double>& per_step_losses() const { return losses_; }
  std::size_t steps() const { return losses_.size(); }

 private:
  std::vector<double> losses_;
  double cumulative_ = 0.0;
};

// Cumulative online loss minus the loss of the eps-ridge batch solution over
// the same samples. Throws ValueError when nothing has been recorded.
double regret(const RegretLedger& ledger, std::span<const DenseSample> samples, double epsilon);
double regret(const RegretLedger& ledger, std::span<const SparseSample> samples, double epsilon);

}  // namespace losse
