#include "losse/learner.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <iostream>
#include <istream>
#include <ostream>
#include <string>

#include "losse/errors.hpp"

namespace losse {

namespace {

void check_target(const DenseVector& y, int target_dim) {
  if (y.size() != target_dim) {
    throw ShapeError("target has length " + std::to_string(y.size()) + ", expected " +
                     std::to_string(target_dim));
  }
  if (!y.allFinite()) throw ValueError("target has a non-finite entry");
}

void check_sparse(const SparseVector& phi, int feature_dim) {
  if (phi.dim != feature_dim) {
    throw ShapeError("feature has dimension " + std::to_string(phi.dim) + ", expected " +
                     std::to_string(feature_dim));
  }
  phi.validate();
}

void check_dense(const DenseVector& phi, int feature_dim) {
  if (phi.size() != feature_dim) {
    throw ShapeError("feature has length " + std::to_string(phi.size()) + ", expected " +
                     std::to_string(feature_dim));
  }
  if (!phi.allFinite()) throw ValueError("feature has a non-finite entry");
}

// Solves (M) X = R for symmetric positive definite M.
Eigen::MatrixXd spd_solve(const Eigen::MatrixXd& m, const Eigen::MatrixXd& rhs) {
  Eigen::LLT<Eigen::MatrixXd> llt(m);
  if (llt.info() != Eigen::Success) {
    throw SolverError("normal-equation matrix is not positive definite; use epsilon > 0");
  }
  return llt.solve(rhs);
}

// Little-endian primitive IO.
void put_u64(std::ostream& out, std::uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 8);
}
void put_u32(std::ostream& out, std::uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
  out.write(reinterpret_cast<const char*>(b), 4);
}
void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  if (!in.read(reinterpret_cast<char*>(b), 8)) throw ParseError("truncated snapshot", in.gcount());
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
  return v;
}
std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ParseError("truncated snapshot", in.gcount());
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
  return v;
}
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

void put_matrix(std::ostream& out, const Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}
void get_matrix(std::istream& in, Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get_f64(in);
}

constexpr char kMagic[8] = {'L', 'F', 'T', 'L', 'S', 'N', 'A', 'P'};
constexpr std::uint32_t kSnapshotVersion = 1;

}  // namespace

FtlLearner::FtlLearner(int feature_dim, int target_dim, double epsilon, Storage storage)
    : feature_dim_(feature_dim), target_dim_(target_dim), epsilon_(epsilon), storage_(storage) {
  if (feature_dim <= 0 || target_dim <= 0) throw ConfigError("learner dimensions must be positive");
  if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be finite and >= 0");
  if (storage_ == Storage::Auto) {
    storage_ = feature_dim <= kDenseLimit ? Storage::Dense : Storage::SparseRows;
  }
  if (storage_ == Storage::Dense) {
    dense_gram_ = Eigen::MatrixXd::Zero(feature_dim, feature_dim);
  } else {
    sparse_gram_.resize(feature_dim);
  }
  cross_ = Eigen::MatrixXd::Zero(feature_dim, target_dim);
  weights_ = Eigen::MatrixXd::Zero(feature_dim, target_dim);
}

void FtlLearner::add_outer(const std::vector<int>& idx, const std::vector<double>& val) {
  const std::size_t n = idx.size();
  if (storage_ == Storage::Dense) {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t a = 0; a < n; ++a) dense_gram_(idx[a], idx[b]) += val[a] * val[b];
    return;
  }
  for (std::size_t a = 0; a < n; ++a) {
    Row& row = sparse_gram_[idx[a]];
    // idx is sorted, so one merge pass inserts every column of this row.
    auto it = row.begin();
    for (std::size_t b = 0; b < n; ++b) {
      it = std::lower_bound(it, row.end(), idx[b],
                            [](const std::pair<int, double>& e, int col) { return e.first < col; });
      if (it != row.end() && it->first == idx[b]) {
        it->second += val[a] * val[b];
      } else {
        it = row.insert(it, {idx[b], val[a] * val[b]});
      }
      ++it;
    }
  }
}

Eigen::MatrixXd FtlLearner::rows_times_weights(const std::vector<int>& rows) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), target_dim_);
  if (storage_ == Storage::Dense) {
    // A is symmetric and column-major: read contiguous columns, not rows.
    for (std::size_t a = 0; a < rows.size(); ++a) {
      out.row(static_cast<Eigen::Index>(a)).noalias() = dense_gram_.col(rows[a]).transpose() * weights_;
    }
    return out;
  }
  out.setZero();
  for (std::size_t a = 0; a < rows.size(); ++a) {
    for (const auto& [col, v] : sparse_gram_[rows[a]]) out.row(a) += v * weights_.row(col);
  }
  return out;
}

double FtlLearner::gram(int i, int j) const {
  if (storage_ == Storage::Dense) return dense_gram_(i, j);
  const Row& row = sparse_gram_.at(i);
  auto it = std::lower_bound(row.begin(), row.end(), j,
                             [](const std::pair<int, double>& e, int col) { return e.first < col; });
  return (it != row.end() && it->first == j) ? it->second : 0.0;
}

Eigen::MatrixXd FtlLearner::gram() const {
  if (storage_ == Storage::Dense) return dense_gram_;
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(feature_dim_, feature_dim_);
  for (int i = 0; i < feature_dim_; ++i)
    for (const auto& [col, v] : sparse_gram_[i]) out(i, col) = v;
  return out;
}

void FtlLearner::observe_dense(const DenseVector& phi, const DenseVector& y) {
  check_dense(phi, feature_dim_);
  check_target(y, target_dim_);
  if (storage_ == Storage::Dense) {
    dense_gram_.noalias() += phi * phi.transpose();
  } else {
    const SparseVector s = SparseVector::from_dense(phi);
    add_outer(s.indices, s.values);
  }
  cross_.noalias() += phi * y.transpose();
  Eigen::MatrixXd m = gram();
  m.diagonal().array() += epsilon_;
  weights_ = spd_solve(m, cross_);
  ++steps_;
}

void FtlLearner::observe_sparse(const SparseVector& phi, const DenseVector& y) {
  check_sparse(phi, feature_dim_);
  check_target(y, target_dim_);
  if (phi.empty()) {
    ++warnings_;
    std::clog << "warning: observe_sparse called with an empty feature; ignored\n";
    return;
  }
  const auto& s = phi.indices;
  const Eigen::Index k = static_cast<Eigen::Index>(s.size());
  const Eigen::Map<const Eigen::VectorXd> phi_s(phi.values.data(), k);

  add_outer(s, phi.values);
  for (Eigen::Index a = 0; a < k; ++a) cross_.row(s[a]).noalias() += phi_s[a] * y.transpose();

  Eigen::MatrixXd block(k, k);
  if (storage_ == Storage::Dense) {
    block = dense_gram_(s, s);
  } else {
    for (Eigen::Index a = 0; a < k; ++a)
      for (Eigen::Index b = 0; b < k; ++b) block(a, b) = gram(s[a], s[b]);
  }

  // A[s,~s] W[~s] = A[s,:] W - A[s,s] W[s]; the complement is never formed.
  const Eigen::MatrixXd w_s = weights_(s, Eigen::all);
  Eigen::MatrixXd rhs = cross_(s, Eigen::all);
  rhs -= rows_times_weights(s) - block * w_s;

  block.diagonal().array() += epsilon_;
  const Eigen::MatrixXd solved = spd_solve(block, rhs);
  if (!solved.allFinite()) throw SolverError("block solve produced non-finite weights");
  weights_(s, Eigen::all) = solved;
  ++steps_;
}

DenseVector FtlLearner::predict(const SparseVector& phi) const {
  if (phi.dim != feature_dim_) throw ShapeError("predict: feature dimension mismatch");
  DenseVector out = DenseVector::Zero(target_dim_);
  for (std::size_t k = 0; k < phi.nnz(); ++k) out += phi.values[k] * weights_.row(phi.indices[k]).transpose();
  return out;
}

DenseVector FtlLearner::predict(const DenseVector& phi) const {
  if (phi.size() != feature_dim_) throw ShapeError("predict: feature dimension mismatch");
  return weights_.transpose() * phi;
}

double FtlLearner::block_residual(const SparseVector& phi) const {
  check_sparse(phi, feature_dim_);
  if (phi.empty()) return 0.0;
  Eigen::MatrixXd g = rows_times_weights(phi.indices);
  g += epsilon_ * weights_(phi.indices, Eigen::all);
  g -= cross_(phi.indices, Eigen::all);
  return g.norm();
}

double FtlLearner::block_residual_scale(const SparseVector& phi) const {
  check_sparse(phi, feature_dim_);
  if (phi.empty()) return 1.0;
  const double scale = rows_times_weights(phi.indices).norm() +
                       epsilon_ * weights_(phi.indices, Eigen::all).norm() +
                       cross_(phi.indices, Eigen::all).norm();
  return std::max(1.0, scale);
}

void FtlLearner::save(std::ostream& out) const {
  out.write(kMagic, sizeof kMagic);
  put_u32(out, kSnapshotVersion);
  put_u32(out, storage_ == Storage::Dense ? 0u : 1u);
  put_u64(out, static_cast<std::uint64_t>(feature_dim_));
  put_u64(out, static_cast<std::uint64_t>(target_dim_));
  put_f64(out, epsilon_);
  put_u64(out, steps_);
  put_u64(out, warnings_);
  put_u64(out, config_hash_);
  if (storage_ == Storage::Dense) {
    put_matrix(out, dense_gram_);
  } else {
    std::uint64_t nnz = 0;
    for (const Row& r : sparse_gram_) nnz += r.size();
    put_u64(out, nnz);
    for (int i = 0; i < feature_dim_; ++i) {
      for (const auto& [col, v] : sparse_gram_[i]) {
        put_u32(out, static_cast<std::uint32_t>(i));
        put_u32(out, static_cast<std::uint32_t>(col));
        put_f64(out, v);
      }
    }
  }
  put_matrix(out, cross_);
  put_matrix(out, weights_);
  if (!out) throw IoError("failed writing learner snapshot");
}

FtlLearner FtlLearner::load(std::istream& in) {
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
    throw ParseError("not a learner snapshot (bad magic)", 0);
  }
  const std::uint32_t version = get_u32(in);
  if (version != kSnapshotVersion) {
    throw ParseError("unsupported snapshot version " + std::to_string(version), 8);
  }
  const std::uint32_t kind = get_u32(in);
  if (kind > 1) throw ParseError("unknown storage kind", 12);
  const std::uint64_t d = get_u64(in);
  const std::uint64_t s = get_u64(in);
  if (d == 0 || s == 0 || d > (1u << 30) || s > (1u << 20)) throw ParseError("implausible dimensions", 16);
  const double eps = get_f64(in);
  FtlLearner out(static_cast<int>(d), static_cast<int>(s), eps,
                 kind == 0 ? Storage::Dense : Storage::SparseRows);
  out.steps_ = get_u64(in);
  out.warnings_ = get_u64(in);
  out.config_hash_ = get_u64(in);
  if (kind == 0) {
    get_matrix(in, out.dense_gram_);
  } else {
    const std::uint64_t nnz = get_u64(in);
    for (std::uint64_t k = 0; k < nnz; ++k) {
      const std::uint32_t i = get_u32(in);
      const std::uint32_t j = get_u32(in);
      const double v = get_f64(in);
      if (i >= d || j >= d) throw ParseError("gram entry out of range", static_cast<std::size_t>(in.tellg()));
      out.sparse_gram_[i].emplace_back(static_cast<int>(j), v);
    }
  }
  get_matrix(in, out.cross_);
  get_matrix(in, out.weights_);
  return out;
}

bool FtlLearner::identical(const FtlLearner& o) const {
  auto same_bits = [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() &&
           std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
  };
  if (feature_dim_ != o.feature_dim_ || target_dim_ != o.target_dim_ ||
      std::bit_cast<std::uint64_t>(epsilon_) != std::bit_cast<std::uint64_t>(o.epsilon_) ||
      storage_ != o.storage_ || steps_ != o.steps_ || warnings_ != o.warnings_ ||
      config_hash_ != o.config_hash_) {
    return false;
  }
  if (storage_ == Storage::Dense) {
    if (!same_bits(dense_gram_, o.dense_gram_)) return false;
  } else {
    for (int i = 0; i < feature_dim_; ++i) {
      const Row& a = sparse_gram_[i];
      const Row& b = o.sparse_gram_[i];
      if (a.size() != b.size()) return false;
      for (std::size_t k = 0; k < a.size(); ++k) {
        if (a[k].first != b[k].first ||
            std::bit_cast<std::uint64_t>(a[k].second) != std::bit_cast<std::uint64_t>(b[k].second)) {
          return false;
        }
      }
    }
  }
  return same_bits(cross_, o.cross_) && same_bits(weights_, o.weights_);
}

namespace {

template <typename Sample, typename AddFn>
Eigen::MatrixXd oracle_impl(std::span<const Sample> samples, double epsilon, int d, AddFn add) {
  if (!(epsilon >= 0.0)) throw ConfigError("epsilon must be >= 0");
  const int s = static_cast<int>(samples.front().y.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(d, s);
  for (const auto& sample : samples) {
    if (sample.y.size() != s) throw ShapeError("oracle: inconsistent target dimensions");
    add(sample, a, b);
  }
  a.diagonal().array() += epsilon;
  return spd_solve(a, b);
}

}  // namespace

Eigen::MatrixXd solve_batch_oracle(std::span<const DenseSample> samples, double epsilon) {
  if (samples.empty()) throw ValueError("oracle: no samples");
  const int d = static_cast<int>(samples.front().phi.size());
  return oracle_impl(samples, epsilon, d, [d](const DenseSample& x, Eigen::MatrixXd& a, Eigen::MatrixXd& b) {
    if (x.phi.size() != d) throw ShapeError("oracle: inconsistent feature dimensions");
    a.noalias() += x.phi * x.phi.transpose();
    b.noalias() += x.phi * x.y.transpose();
  });
}

Eigen::MatrixXd solve_batch_oracle(std::span<const SparseSample> samples, double epsilon) {
  if (samples.empty()) throw ValueError("oracle: no samples");
  const int d = samples.front().phi.dim;
  return oracle_impl(samples, epsilon, d, [d](const SparseSample& x, Eigen::MatrixXd& a, Eigen::MatrixXd& b) {
    if (x.phi.dim != d) throw ShapeError("oracle: inconsistent feature dimensions");
    const auto& idx = x.phi.indices;
    const auto& val = x.phi.values;
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < idx.size(); ++j) a(idx[i], idx[j]) += val[i] * val[j];
      b.row(idx[i]).noalias() += val[i] * x.y.transpose();
    }
  });
}

SgdLearner::SgdLearner(int feature_dim, int target_dim, double learning_rate)
    : weights_(Eigen::MatrixXd::Zero(feature_dim, target_dim)), learning_rate_(learning_rate) {
  if (feature_dim <= 0 || target_dim <= 0) throw ConfigError("learner dimensions must be positive");
  if (!(learning_rate >= 0.0)) throw ConfigError("learning rate must be >= 0");
}

void SgdLearner::step(const SparseVector& phi, const DenseVector& y) {
  const SparseSample sample{phi, y};
  step_batch(std::span<const SparseSample>(&sample, 1));
}

void SgdLearner::step(const DenseVector& phi, const DenseVector& y) {
  check_dense(phi, static_cast<int>(weights_.rows()));
  check_target(y, static_cast<int>(weights_.cols()));
  const DenseVector residual = weights_.transpose() * phi - y;
  const Eigen::MatrixXd grad = 2.0 * phi * residual.transpose();
  if (!grad.allFinite()) throw ValueError("sgd: non-finite gradient");
  weights_ -= learning_rate_ * grad;
}

void SgdLearner::step_batch(std::span<const SparseSample> batch) {
  if (batch.empty()) return;
  const int d = static_cast<int>(weights_.rows());
  const int s = static_cast<int>(weights_.cols());
  std::vector<DenseVector> residuals;
  residuals.reserve(batch.size());
  for (const auto& sample : batch) {
    check_sparse(sample.phi, d);
    check_target(sample.y, s);
    residuals.push_back(predict(sample.phi) - sample.y);
    if (!residuals.back().allFinite()) throw ValueError("sgd: non-finite gradient");
  }
  const double step = learning_rate_ * 2.0 / static_cast<double>(batch.size());
  for (std::size_t n = 0; n < batch.size(); ++n) {
    const auto& phi = batch[n].phi;
    for (std::size_t k = 0; k < phi.nnz(); ++k) {
      weights_.row(phi.indices[k]) -= step * phi.values[k] * residuals[n].transpose();
    }
  }
}

DenseVector SgdLearner::predict(const SparseVector& phi) const {
  if (phi.dim != weights_.rows()) throw ShapeError("predict: feature dimension mismatch");
  DenseVector out = DenseVector::Zero(weights_.cols());
  for (std::size_t k = 0; k < phi.nnz(); ++k) out += phi.values[k] * weights_.row(phi.indices[k]).transpose();
  return out;
}

DenseVector SgdLearner::predict(const DenseVector& phi) const {
  if (phi.size() != weights_.rows()) throw ShapeError("predict: feature dimension mismatch");
  return weights_.transpose() * phi;
}

double squared_loss(const DenseVector& prediction, const DenseVector& target) {
  if (prediction.size() != target.size()) throw ShapeError("loss: dimension mismatch");
  return (prediction - target).squaredNorm();
}

void RegretLedger::record(double loss) {
  if (!std::isfinite(loss) || loss < 0.0) throw ValueError("loss must be finite and non-negative");
  losses_.push_back(loss);
  cumulative_ += loss;
}

double RegretLedger::record_prediction(const FtlLearner& learner, const SparseVector& phi,
                                       const DenseVector& y) {
  const double loss = squared_loss(learner.predict(phi), y);
  record(loss);
  return loss;
}

double RegretLedger::record_prediction(const FtlLearner& learner, const DenseVector& phi,
                                       const DenseVector& y) {
  const double loss = squared_loss(learner.predict(phi), y);
  record(loss);
  return loss;
}

double regret(const RegretLedger& ledger, std::span<const DenseSample> samples, double epsilon) {
  if (ledger.steps() == 0 || samples.empty()) throw ValueError("regret requested before any sample");
  const Eigen::MatrixXd w = solve_batch_oracle(samples, epsilon);
  double best = 0.0;
  for (const auto& s : samples) best += squared_loss(w.transpose() * s.phi, s.y);
  return ledger.cumulative_loss() - best;
}

double regret(const RegretLedger& ledger, std::span<const SparseSample> samples, double epsilon) {
  if (ledger.steps() == 0 || samples.empty()) throw ValueError("regret requested before any sample");
  const Eigen::MatrixXd w = solve_batch_oracle(samples, epsilon);
  double best = 0.0;
  for (const auto& s : samples) {
    DenseVector pred = DenseVector::Zero(w.cols());
    for (std::size_t k = 0; k < s.phi.nnz(); ++k) pred += s.phi.values[k] * w.row(s.phi.indices[k]).transpose();
    best += squared_loss(pred, s.y);
  }
  return ledger.cumulative_loss() - best;
}

}  // namespace losse
