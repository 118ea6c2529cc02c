#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/QR>
#include <cmath>
#include <sstream>

#include "losse/encoding.hpp"
#include "losse/errors.hpp"
#include "losse/learner.hpp"
#include "losse/rng.hpp"

using namespace losse;

namespace {

DenseVector vec(std::initializer_list<double> v) {
  DenseVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

DenseVector random_vector(Rng& rng, int n) {
  DenseVector v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  return v;
}

// Independent normal-equation oracle: accumulates A and B with plain loops
// and solves with a QR factorization instead of the learner's Cholesky.
Eigen::MatrixXd qr_oracle(const std::vector<DenseSample>& samples, double eps) {
  const int d = static_cast<int>(samples.front().phi.size());
  const int s = static_cast<int>(samples.front().y.size());
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(d, d);
  Eigen::MatrixXd b = Eigen::MatrixXd::Zero(d, s);
  for (const auto& smp : samples) {
    for (int i = 0; i < d; ++i) {
      for (int j = 0; j < d; ++j) a(i, j) += smp.phi[i] * smp.phi[j];
      for (int k = 0; k < s; ++k) b(i, k) += smp.phi[i] * smp.y[k];
    }
  }
  for (int i = 0; i < d; ++i) a(i, i) += eps;
  return a.colPivHouseholderQr().solve(b);
}

double rel_frobenius(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / std::max(b.norm(), 1e-300);
}

// Gradient of the eps-regularized objective restricted to rows s, recomputed
// from the learner's public memories.
double restricted_residual(const FtlLearner& l, const SparseVector& phi) {
  const Eigen::MatrixXd a = l.gram();
  double sq = 0.0;
  for (int r : phi.indices) {
    const Eigen::RowVectorXd g = a.row(r) * l.weights() + l.epsilon() * l.weights().row(r) - l.cross().row(r);
    sq += g.squaredNorm();
  }
  return std::sqrt(sq);
}

}  // namespace

TEST_CASE("dense observe: mean of targets") {
  FtlLearner l(1, 1, 0.0);
  l.observe_dense(vec({1.0}), vec({2.0}));
  l.observe_dense(vec({1.0}), vec({4.0}));
  CHECK(l.weights()(0, 0) == doctest::Approx(3.0).epsilon(1e-14));
  CHECK(l.steps_seen() == 2);
}

TEST_CASE("dense observe: one-hot sample") {
  const double eps = 0.25;
  FtlLearner l(5, 1, eps);
  DenseVector phi = DenseVector::Zero(5);
  phi[2] = 1.0;
  l.observe_dense(phi, vec({3.0}));
  CHECK(l.weights()(2, 0) == doctest::Approx(3.0 / (1.0 + eps)));
  for (int r : {0, 1, 3, 4}) CHECK(l.weights()(r, 0) == 0.0);
}

TEST_CASE("dense observe equals the normal-equation oracle after every step") {
  Rng rng(4);
  FtlLearner l(8, 3, 1e-6);
  std::vector<DenseSample> seen;
  for (int t = 0; t < 50; ++t) {
    DenseSample smp{random_vector(rng, 8), random_vector(rng, 3)};
    l.observe_dense(smp.phi, smp.y);
    seen.push_back(smp);
    CHECK(rel_frobenius(l.weights(), qr_oracle(seen, 1e-6)) < 1e-8);
  }
}

TEST_CASE("singular system without ridge is a solver error") {
  FtlLearner l(3, 1, 0.0);
  DenseVector phi = DenseVector::Zero(3);
  phi[0] = 1.0;
  CHECK_THROWS_AS(l.observe_dense(phi, vec({1.0})), SolverError);
}

TEST_CASE("sparse observe: first sample on one index") {
  FtlLearner l(10, 2, 0.0);
  l.observe_sparse(SparseVector{10, {4}, {1.0}}, vec({2.5, -1.0}));
  CHECK(l.weights()(4, 0) == 2.5);
  CHECK(l.weights()(4, 1) == -1.0);
  CHECK(l.weights().norm() == doctest::Approx(std::hypot(2.5, 1.0)));
}

TEST_CASE("sparse observe with full support equals the dense path") {
  Rng rng(6);
  FtlLearner dense(6, 2, 1e-6);
  FtlLearner sparse(6, 2, 1e-6);
  for (int t = 0; t < 100; ++t) {
    DenseVector phi = random_vector(rng, 6);
    const DenseVector y = random_vector(rng, 2);
    dense.observe_dense(phi, y);
    sparse.observe_sparse(SparseVector::from_dense(phi), y);
    CHECK(rel_frobenius(sparse.weights(), dense.weights()) < 1e-8);
  }
}

TEST_CASE("sparse observe leaves rows outside the support untouched") {
  const LosseEncoder enc(LosseConfig{.input_dim = 2, .kappa = 4, .rho = 2, .lambda = 6, .seed = 3});
  FtlLearner l(enc.feature_dim(), 1, 1e-6);
  Rng rng(1);
  for (int t = 0; t < 300; ++t) {
    DenseVector x(2);
    x << rng.uniform(-3, 3), rng.uniform(-3, 3);
    const SparseVector phi = enc.encode(x);
    const Eigen::MatrixXd before = l.weights();
    l.observe_sparse(phi, vec({std::sin(x[0])}));
    std::vector<bool> in_support(enc.feature_dim(), false);
    for (int i : phi.indices) in_support[i] = true;
    for (int r = 0; r < enc.feature_dim(); ++r) {
      if (!in_support[r]) REQUIRE(l.weights().row(r) == before.row(r));
    }
  }
}

TEST_CASE("block optimality after every sparse update") {
  const LosseEncoder enc(LosseConfig{.input_dim = 3, .kappa = 5, .rho = 2, .lambda = 5, .seed = 8});
  for (auto storage : {FtlLearner::Storage::Dense, FtlLearner::Storage::SparseRows}) {
    FtlLearner l(enc.feature_dim(), 2, 1e-6, storage);
    Rng rng(2);
    for (int t = 0; t < 400; ++t) {
      const DenseVector x = random_vector(rng, 3);
      const SparseVector phi = enc.encode_clamped(x);
      l.observe_sparse(phi, vec({x.sum(), x[0] * x[1]}));
      const double scale = l.block_residual_scale(phi);
      REQUIRE(restricted_residual(l, phi) <= 1e-8 * scale);
      REQUIRE(std::abs(l.block_residual(phi) - restricted_residual(l, phi)) <= 1e-12 * scale);
    }
  }
}

TEST_CASE("memories equal their dense recomputation") {
  const LosseEncoder enc(LosseConfig{.input_dim = 2, .kappa = 4, .rho = 1, .lambda = 8, .seed = 1});
  REQUIRE(enc.feature_dim() <= 64);
  for (auto storage : {FtlLearner::Storage::Dense, FtlLearner::Storage::SparseRows}) {
    FtlLearner l(enc.feature_dim(), 2, 1e-6, storage);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(enc.feature_dim(), enc.feature_dim());
    Eigen::MatrixXd b = Eigen::MatrixXd::Zero(enc.feature_dim(), 2);
    Rng rng(3);
    for (int t = 0; t < 500; ++t) {
      const SparseVector phi = enc.encode_clamped(random_vector(rng, 2));
      const DenseVector y = random_vector(rng, 2);
      l.observe_sparse(phi, y);
      const DenseVector p = phi.to_dense();
      a += p * p.transpose();
      b += p * y.transpose();
    }
    CHECK((l.gram() - a).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((l.cross() - b).cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::MatrixXd g = l.gram();
    CHECK((g - g.transpose()).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("dense and sparse-row storage agree") {
  const LosseEncoder enc(LosseConfig{.input_dim = 3, .kappa = 6, .rho = 2, .lambda = 6, .seed = 5});
  FtlLearner a(enc.feature_dim(), 1, 1e-4, FtlLearner::Storage::Dense);
  FtlLearner b(enc.feature_dim(), 1, 1e-4, FtlLearner::Storage::SparseRows);
  Rng rng(9);
  for (int t = 0; t < 500; ++t) {
    const SparseVector phi = enc.encode_clamped(random_vector(rng, 3));
    const DenseVector y = vec({rng.normal()});
    a.observe_sparse(phi, y);
    b.observe_sparse(phi, y);
  }
  CHECK(rel_frobenius(b.weights(), a.weights()) < 1e-10);
}

TEST_CASE("auto storage switches above the dense limit") {
  CHECK(FtlLearner(FtlLearner::kDenseLimit, 1).storage() == FtlLearner::Storage::Dense);
  CHECK(FtlLearner(FtlLearner::kDenseLimit + 1, 1).storage() == FtlLearner::Storage::SparseRows);
}

TEST_CASE("sparse observe error paths") {
  FtlLearner l(5, 2);
  CHECK_THROWS_AS(l.observe_sparse(SparseVector{4, {0}, {1.0}}, vec({1.0, 2.0})), ShapeError);
  CHECK_THROWS_AS(l.observe_sparse(SparseVector{5, {0}, {1.0}}, vec({1.0})), ShapeError);
  CHECK_THROWS_AS(l.observe_sparse(SparseVector{5, {0}, {std::nan("")}}, vec({1.0, 2.0})), ValueError);
  CHECK_THROWS_AS(l.observe_sparse(SparseVector{5, {0}, {1.0}}, vec({1.0, INFINITY})), ValueError);
  CHECK_THROWS_AS(l.observe_dense(vec({1, 2, 3, 4, 5}), vec({1.0, std::nan("")})), ValueError);
  CHECK_THROWS_AS(FtlLearner(0, 1), ConfigError);
  CHECK_THROWS_AS(FtlLearner(3, 1, -1.0), ConfigError);

  l.observe_sparse(SparseVector{5, {}, {}}, vec({1.0, 2.0}));
  CHECK(l.warnings() == 1);
  CHECK(l.steps_seen() == 0);
  CHECK(l.weights().isZero(0.0));
}

TEST_CASE("predict") {
  FtlLearner l(4, 2);
  CHECK(l.predict(SparseVector{4, {1, 3}, {0.5, 2.0}}).isZero(0.0));
  Rng rng(2);
  for (int t = 0; t < 20; ++t) l.observe_dense(random_vector(rng, 4), random_vector(rng, 2));
  const DenseVector e2 = DenseVector::Unit(4, 2);
  CHECK(l.predict(e2) == l.weights().row(2).transpose());
  CHECK(l.predict(SparseVector{4, {2}, {1.0}}) == l.weights().row(2).transpose());
  const DenseVector phi = random_vector(rng, 4);
  DenseVector ref = DenseVector::Zero(2);
  for (int i = 0; i < 4; ++i)
    for (int k = 0; k < 2; ++k) ref[k] += l.weights()(i, k) * phi[i];
  CHECK((l.predict(phi) - ref).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((l.predict(SparseVector::from_dense(phi)) - ref).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_THROWS_AS(l.predict(DenseVector::Zero(3)), ShapeError);
  CHECK_THROWS_AS(l.predict(SparseVector{3, {0}, {1.0}}), ShapeError);
}

TEST_CASE("batch oracle") {
  std::vector<DenseSample> s = {{vec({1.0}), vec({2.0})}, {vec({1.0}), vec({4.0})}};
  CHECK(solve_batch_oracle(s, 0.0)(0, 0) == doctest::Approx(3.0));

  Rng rng(7);
  std::vector<DenseSample> data;
  for (int i = 0; i < 30; ++i) data.push_back({random_vector(rng, 5), random_vector(rng, 2)});
  const Eigen::MatrixXd w = solve_batch_oracle(data, 0.0);
  CHECK(rel_frobenius(w, qr_oracle(data, 0.0)) < 1e-10);

  std::vector<DenseSample> twice = data;
  twice.insert(twice.end(), data.begin(), data.end());
  CHECK(rel_frobenius(solve_batch_oracle(twice, 0.0), w) < 1e-10);

  CHECK(solve_batch_oracle(data, 1e12).norm() < 1e-9);

  std::vector<SparseSample> sparse;
  for (const auto& d : data) sparse.push_back({SparseVector::from_dense(d.phi), d.y});
  CHECK(rel_frobenius(solve_batch_oracle(sparse, 1e-6), solve_batch_oracle(data, 1e-6)) < 1e-12);

  std::vector<DenseSample> bad = {{vec({1.0, 2.0}), vec({1.0})}, {vec({1.0}), vec({1.0})}};
  CHECK_THROWS_AS(solve_batch_oracle(bad, 1e-6), ShapeError);
  CHECK_THROWS_AS(solve_batch_oracle(std::span<const DenseSample>{}, 1e-6), ValueError);
}

TEST_CASE("gradient descent baseline") {
  SUBCASE("zero learning rate") {
    SgdLearner l(3, 1, 0.0);
    l.step(SparseVector{3, {1}, {1.0}}, vec({1.0}));
    CHECK(l.weights().isZero(0.0));
  }
  SUBCASE("one step on a one-hot sample") {
    SgdLearner l(3, 1, 0.25);
    l.step(SparseVector{3, {1}, {1.0}}, vec({1.0}));
    CHECK(l.weights()(1, 0) == 0.5);
    CHECK(l.weights()(0, 0) == 0.0);
  }
  SUBCASE("repeated steps converge to the target") {
    SgdLearner l(4, 2, 0.1);
    const DenseVector phi = vec({0.5, -0.3, 0.2, 0.1});
    const DenseVector y = vec({1.0, -2.0});
    for (int i = 0; i < 2000; ++i) l.step(phi, y);
    CHECK((l.predict(phi) - y).norm() < 1e-9);
  }
  SUBCASE("batch step averages the per-sample gradients") {
    SgdLearner a(3, 1, 0.1);
    a.weights() << 0.3, -0.2, 0.5;
    SgdLearner b = a;
    std::vector<SparseSample> batch = {{SparseVector{3, {0, 2}, {1.0, 0.5}}, vec({1.0})},
                                       {SparseVector{3, {1}, {2.0}}, vec({-1.0})}};
    a.step_batch(batch);
    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(3, 1);
    for (const auto& s : batch) {
      const DenseVector p = s.phi.to_dense();
      grad += 2.0 * p * (p.transpose() * b.weights() - s.y.transpose());
    }
    CHECK((a.weights() - (b.weights() - 0.1 * grad / 2.0)).norm() < 1e-14);
  }
  SUBCASE("divergence is reported") {
    SgdLearner l(1, 1, 1e200);
    l.step(vec({1e200}), vec({1.0}));
    CHECK_THROWS_AS(l.step(vec({1e200}), vec({1.0})), ValueError);
  }
}

TEST_CASE("regret accounting") {
  SUBCASE("constant target") {
    FtlLearner l(1, 1, 0.0);
    RegretLedger ledger;
    std::vector<DenseSample> samples;
    for (int t = 0; t < 20; ++t) {
      const double loss = ledger.record_prediction(l, vec({1.0}), vec({1.0}));
      if (t > 0) CHECK(loss < 1e-24);
      l.observe_dense(vec({1.0}), vec({1.0}));
      samples.push_back({vec({1.0}), vec({1.0})});
    }
    CHECK(ledger.cumulative_loss() == doctest::Approx(1.0));
    CHECK(regret(ledger, samples, 0.0) == doctest::Approx(1.0));
    double sum = 0.0;
    for (double x : ledger.per_step_losses()) sum += x;
    CHECK(sum == ledger.cumulative_loss());
  }
  SUBCASE("average regret falls on an i.i.d. linear stream") {
    Rng rng(11);
    const DenseVector w_true = random_vector(rng, 4);
    FtlLearner l(4, 1, 1e-6);
    RegretLedger ledger;
    std::vector<DenseSample> samples;
    double prev = INFINITY;
    for (int t = 1; t <= 4000; ++t) {
      const DenseVector phi = random_vector(rng, 4);
      const DenseVector y = vec({phi.dot(w_true) + 0.1 * rng.normal()});
      ledger.record_prediction(l, phi, y);
      l.observe_dense(phi, y);
      samples.push_back({phi, y});
      if (t == 500 || t == 1000 || t == 2000 || t == 4000) {
        const double avg = regret(ledger, samples, 1e-6) / t;
        CHECK(avg < prev);
        prev = avg;
      }
    }
  }
  SUBCASE("regret before any sample is an error") {
    RegretLedger ledger;
    CHECK_THROWS_AS(regret(ledger, std::span<const DenseSample>{}, 1e-6), ValueError);
  }
  SUBCASE("squared loss") {
    CHECK(squared_loss(vec({1.0, 2.0}), vec({0.0, 4.0})) == 5.0);
  }
}

TEST_CASE("snapshots round trip bit for bit") {
  const LosseEncoder enc(LosseConfig{.input_dim = 2, .kappa = 3, .rho = 2, .lambda = 5, .seed = 2});
  for (auto storage : {FtlLearner::Storage::Dense, FtlLearner::Storage::SparseRows}) {
    FtlLearner l(enc.feature_dim(), 2, 1e-5, storage);
    l.set_config_hash(config_hash(enc.config()));
    Rng rng(5);
    for (int t = 0; t < 100; ++t) l.observe_sparse(enc.encode_clamped(random_vector(rng, 2)), random_vector(rng, 2));
    l.observe_sparse(SparseVector{enc.feature_dim(), {}, {}}, random_vector(rng, 2));
    std::stringstream buf;
    l.save(buf);
    const FtlLearner back = FtlLearner::load(buf);
    CHECK(back.identical(l));
    CHECK(back.steps_seen() == 100);
    CHECK(back.warnings() == 1);
    CHECK(back.config_hash() == l.config_hash());
    CHECK(back.storage() == storage);

    // Continuing from the snapshot matches continuing from the original.
    FtlLearner a = l, b = back;
    const SparseVector phi = enc.encode_clamped(random_vector(rng, 2));
    const DenseVector y = random_vector(rng, 2);
    a.observe_sparse(phi, y);
    b.observe_sparse(phi, y);
    CHECK(a.identical(b));
  }
}

TEST_CASE("corrupt snapshots are parse errors") {
  FtlLearner l(4, 1);
  l.observe_dense(vec({1, 2, 3, 4}), vec({1.0}));
  std::stringstream buf;
  l.save(buf);
  const std::string bytes = buf.str();

  std::stringstream truncated(bytes.substr(0, bytes.size() / 2));
  CHECK_THROWS_AS(FtlLearner::load(truncated), ParseError);

  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  std::stringstream m(bad_magic);
  CHECK_THROWS_AS(FtlLearner::load(m), ParseError);

  std::string bad_version = bytes;
  bad_version[8] = 99;
  std::stringstream v(bad_version);
  CHECK_THROWS_AS(FtlLearner::load(v), ParseError);
}
