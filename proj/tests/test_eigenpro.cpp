#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

#include "kse/eigenpro.hpp"

using kse::KernelParams;
using kse::SolverConfig;

namespace {

Eigen::MatrixXd random_points(Eigen::Index n, Eigen::Index d, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd X(n, d);
  for (Eigen::Index i = 0; i < X.size(); ++i) X.data()[i] = normal(rng);
  return X;
}

// Smooth two-output target.
Eigen::MatrixXd smooth_targets(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Y(X.rows(), 2);
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    Y(i, 0) = std::sin(X(i, 0)) + 0.5 * X(i, 1);
    Y(i, 1) = std::cos(X.row(i).sum() / 3.0);
  }
  return Y;
}

double relative_rms(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).norm() / b.norm();
}

}  // namespace

TEST_CASE("estimate_eigensystem: rank-one matrix from identical rows") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(30, 4);
  const KernelParams p{1.0, 2.0};
  const kse::EigenSystem es = kse::estimate_eigensystem(X, p, 0, 30, 1);
  CHECK(es.rank() == 0);
  CHECK(es.tail == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(kse::estimate_eigensystem(X, p, 1, 30, 1), kse::NumericError);
}

TEST_CASE("estimate_eigensystem: full subsample matches dense eigendecomposition of K/n") {
  const Eigen::Index n = 60;
  const Eigen::MatrixXd X = random_points(n, 5, 11);
  const KernelParams p{1.0, 3.0};
  const kse::EigenSystem es = kse::estimate_eigensystem(X, p, n - 1, n, 5);

  const Eigen::MatrixXd K = kse::kernel_matrix(p, X) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> dense(K, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ref = dense.eigenvalues().reverse();
  REQUIRE(es.rank() == n - 1);
  for (Eigen::Index i = 0; i < n - 1; ++i) {
    CHECK(std::abs(es.eigenvalues(i) - ref(i)) <= 1e-6 * ref(i));
  }
  CHECK(std::abs(es.tail - ref(n - 1)) <= 1e-6 * ref(n - 1));
  for (Eigen::Index i = 1; i < es.rank(); ++i) CHECK(es.eigenvalues(i) <= es.eigenvalues(i - 1));
}

TEST_CASE("estimate_eigensystem: randomized path tracks the dense spectrum") {
  const Eigen::Index n = 500;
  const Eigen::MatrixXd X = random_points(n, 3, 12);
  const KernelParams p{2.0, 2.0};
  const kse::EigenSystem es = kse::estimate_eigensystem(X, p, 20, n, 3);
  const Eigen::MatrixXd K = kse::kernel_matrix(p, X) / static_cast<double>(n);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> dense(K, Eigen::EigenvaluesOnly);
  const Eigen::VectorXd ref = dense.eigenvalues().reverse();
  for (Eigen::Index i = 0; i < 20; ++i) {
    CHECK(es.eigenvalues(i) == doctest::Approx(ref(i)).epsilon(1e-3));
  }
  CHECK(es.tail == doctest::Approx(ref(20)).epsilon(2e-2));
}

TEST_CASE("estimate_eigensystem: eigenfunctions are orthonormal in the RKHS") {
  const Eigen::Index n = 80;
  const Eigen::MatrixXd X = random_points(n, 4, 13);
  const KernelParams p{0.5, 1.0};
  const kse::EigenSystem es = kse::estimate_eigensystem(X, p, 10, 40, 9);
  const Eigen::MatrixXd Ks = kse::kernel_matrix(p, X(es.rows, Eigen::all));
  const Eigen::MatrixXd gram = es.coeffs.transpose() * Ks * es.coeffs;
  CHECK(gram.isApprox(Eigen::MatrixXd::Identity(10, 10), 1e-8));
}

TEST_CASE("estimate_eigensystem: deterministic given seed, errors on q >= m") {
  const Eigen::MatrixXd X = random_points(100, 4, 14);
  const KernelParams p{1.0, 2.0};
  const kse::EigenSystem a = kse::estimate_eigensystem(X, p, 10, 50, 77);
  const kse::EigenSystem b = kse::estimate_eigensystem(X, p, 10, 50, 77);
  CHECK(a.rows == b.rows);
  CHECK((a.eigenvalues.array() == b.eigenvalues.array()).all());
  CHECK((a.coeffs.array() == b.coeffs.array()).all());
  CHECK(a.tail == b.tail);
  CHECK_THROWS_AS(kse::estimate_eigensystem(X, p, 50, 50, 1), kse::ConfigError);
}

TEST_CASE("direct_solve: scalar system") {
  Eigen::MatrixXd X(1, 3);
  X << 0.1, 0.2, 0.3;
  Eigen::MatrixXd Y(1, 1);
  Y << 4.0;
  const kse::KernelModel m = kse::direct_solve(X, Y, KernelParams{1.0, 1.0}, 0.25);
  CHECK(m.alpha(0, 0) == doctest::Approx(4.0 / 1.25).epsilon(1e-15));
}

TEST_CASE("direct_solve: residual is tiny on a random system") {
  const Eigen::MatrixXd X = random_points(100, 6, 15);
  const Eigen::MatrixXd Y = smooth_targets(X);
  const KernelParams p{1.0, 3.0};
  const double ridge = 1e-6;
  const kse::KernelModel m = kse::direct_solve(X, Y, p, ridge);
  Eigen::MatrixXd A = kse::kernel_matrix(p, X);
  A.diagonal().array() += ridge;
  CHECK((A * m.alpha - Y).norm() / Y.norm() <= 1e-8);
}

TEST_CASE("direct_solve: singular matrix and cap are reported") {
  Eigen::MatrixXd X = random_points(20, 3, 16);
  X.row(5) = X.row(2);
  const Eigen::MatrixXd Y = smooth_targets(X);
  try {
    kse::direct_solve(X, Y, KernelParams{1.0, 1.0}, 0.0);
    FAIL("expected factorization failure");
  } catch (const kse::NumericError& e) {
    CHECK(std::string(e.what()).find("smallest pivot") != std::string::npos);
  }
  CHECK_THROWS_AS(kse::direct_solve(X, Y, KernelParams{1.0, 1.0}, 0.0, 10), kse::BudgetError);
}

TEST_CASE("predict: interpolation, zero coefficients, single support point") {
  const Eigen::MatrixXd X = random_points(100, 8, 17);
  const Eigen::MatrixXd Y = smooth_targets(X);
  const kse::KernelModel m = kse::direct_solve(X, Y, KernelParams{1.0, 4.0}, 1e-10);
  CHECK((kse::predict(m, X) - Y).cwiseAbs().maxCoeff() <= 1e-4);

  kse::KernelModel zero = m;
  zero.alpha.setZero();
  CHECK(kse::predict(zero, X).isZero(0.0));

  kse::KernelModel single;
  single.params = KernelParams{0.5, 1.0};
  single.support = std::make_shared<const Eigen::MatrixXd>(X.topRows(1));
  single.alpha = Eigen::MatrixXd::Ones(1, 1);
  CHECK(kse::predict(single, X.topRows(1))(0, 0) == 1.0);

  CHECK_THROWS_AS(kse::predict(m, random_points(3, 7, 1)), kse::DataError);
}

TEST_CASE("predict is linear in the coefficients") {
  const Eigen::MatrixXd X = random_points(120, 5, 18);
  const Eigen::MatrixXd Z = random_points(40, 5, 19);
  kse::KernelModel a;
  a.params = KernelParams{0.8, 2.0};
  a.support = std::make_shared<const Eigen::MatrixXd>(X);
  a.alpha = random_points(120, 3, 20);
  kse::KernelModel b = a;
  b.alpha = random_points(120, 3, 21);
  kse::KernelModel sum = a;
  sum.alpha = a.alpha + b.alpha;
  const Eigen::MatrixXd lhs = kse::predict(sum, Z);
  const Eigen::MatrixXd rhs = kse::predict(a, Z) + kse::predict(b, Z);
  CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-12 * rhs.cwiseAbs().maxCoeff());
}

TEST_CASE("train: converges to the direct interpolant") {
  const Eigen::MatrixXd X = random_points(200, 10, 22);
  const Eigen::MatrixXd Y = smooth_targets(X);
  const KernelParams p{1.0, 4.0};
  SolverConfig cfg;
  cfg.max_epochs = 50;
  cfg.patience = 50;
  cfg.batch_size = 64;
  cfg.seed = 3;
  const kse::TrainResult r = kse::train(X, Y, p, cfg);
  const kse::KernelModel oracle = kse::direct_solve(X, Y, p, 1e-8);
  CHECK(r.epochs_run <= 50);
  CHECK(relative_rms(kse::predict(r.model, X), kse::predict(oracle, X)) <= 1e-2);
}

TEST_CASE("train: zero targets keep coefficients exactly zero") {
  const Eigen::MatrixXd X = random_points(90, 4, 23);
  const Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(90, 3);
  SolverConfig cfg;
  cfg.max_epochs = 5;
  cfg.patience = 5;
  cfg.batch_size = 16;
  const kse::TrainResult r = kse::train(X, Y, KernelParams{1.0, 2.0}, cfg);
  CHECK(r.model.alpha.isZero(0.0));
  for (double loss : r.loss_history) CHECK(loss == 0.0);
}

TEST_CASE("train: q = 0 full batch is one Richardson step") {
  const Eigen::Index n = 70;
  const Eigen::MatrixXd X = random_points(n, 4, 24);
  const Eigen::MatrixXd Y = smooth_targets(X);
  const KernelParams p{1.0, 2.0};
  SolverConfig cfg;
  cfg.q = 0;
  cfg.batch_size = n;
  cfg.max_epochs = 1;
  const kse::TrainResult r = kse::train(X, Y, p, cfg);
  // alpha <- alpha + eta (Y - K alpha) / n from alpha = 0.
  const Eigen::MatrixXd expected = r.step_size * Y / static_cast<double>(n);
  CHECK((r.model.alpha - expected).cwiseAbs().maxCoeff() <= 1e-14 * expected.cwiseAbs().maxCoeff());

  // A second epoch continues the same recursion.
  cfg.max_epochs = 2;
  cfg.patience = 2;
  const kse::TrainResult r2 = kse::train(X, Y, p, cfg);
  const Eigen::MatrixXd K = kse::kernel_matrix(p, X);
  const Eigen::MatrixXd step2 = expected + r2.step_size * (Y - K * expected) / static_cast<double>(n);
  CHECK((r2.model.alpha - step2).cwiseAbs().maxCoeff() <= 1e-12 * step2.cwiseAbs().maxCoeff());
}

TEST_CASE("train: full-batch training loss never rises by more than 1 percent") {
  const Eigen::MatrixXd X = random_points(300, 6, 25);
  const Eigen::MatrixXd Y = smooth_targets(X);
  SolverConfig cfg;
  cfg.q = 40;
  cfg.batch_size = 300;
  cfg.max_epochs = 30;
  cfg.patience = 30;
  for (double gamma : {0.5, 1.0, 2.0}) {
    const kse::TrainResult r = kse::train(X, Y, KernelParams{gamma, 3.0}, cfg);
    for (std::size_t e = 1; e < r.loss_history.size(); ++e) {
      CHECK(r.loss_history[e] <= 1.01 * r.loss_history[e - 1]);
    }
  }
}

TEST_CASE("train: validation early stopping keeps the best epoch") {
  const Eigen::MatrixXd X = random_points(250, 5, 26);
  Eigen::MatrixXd Y = smooth_targets(X);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.5);
  for (Eigen::Index i = 0; i < Y.size(); ++i) Y.data()[i] += noise(rng);
  const Eigen::MatrixXd Xv = random_points(100, 5, 27);
  const Eigen::MatrixXd Yv = smooth_targets(Xv);
  SolverConfig cfg;
  cfg.max_epochs = 40;
  cfg.patience = 2;
  cfg.batch_size = 32;
  const kse::TrainResult r =
      kse::train(X, Y, KernelParams{1.0, 2.0}, cfg, kse::ValidationSet{Xv, Yv});
  REQUIRE(r.best_epoch >= 1);
  const double best = r.loss_history[static_cast<std::size_t>(r.best_epoch - 1)];
  for (double l : r.loss_history) CHECK(best <= l);
  const Eigen::MatrixXd pv = kse::predict(r.model, Xv);
  CHECK((pv - Yv).squaredNorm() / static_cast<double>(Yv.size()) == doctest::Approx(best).epsilon(1e-10));
  if (r.early_stopped) {
    CHECK(r.epochs_run == r.best_epoch + cfg.patience);
  }
}

TEST_CASE("train: deterministic loss history") {
  const Eigen::MatrixXd X = random_points(150, 5, 28);
  const Eigen::MatrixXd Y = smooth_targets(X);
  SolverConfig cfg;
  cfg.max_epochs = 4;
  cfg.batch_size = 20;
  cfg.seed = 99;
  const auto a = kse::train(X, Y, KernelParams{0.5, 1.0}, cfg);
  const auto b = kse::train(X, Y, KernelParams{0.5, 1.0}, cfg);
  CHECK(a.loss_history == b.loss_history);
  CHECK((a.model.alpha.array() == b.model.alpha.array()).all());
}

TEST_CASE("train: divergence is reported with epoch and step size") {
  const Eigen::MatrixXd X = random_points(120, 4, 29);
  const Eigen::MatrixXd Y = smooth_targets(X);
  SolverConfig cfg;
  cfg.q = 0;
  cfg.batch_size = 120;
  cfg.step_scale = 50.0;
  cfg.max_epochs = 200;
  cfg.patience = 200;
  try {
    kse::train(X, Y, KernelParams{2.0, 50.0}, cfg);
    FAIL("expected divergence");
  } catch (const kse::NumericError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("epoch") != std::string::npos);
    CHECK(msg.find("step size") != std::string::npos);
  }
}

TEST_CASE("train: argument validation") {
  const Eigen::MatrixXd X = random_points(20, 3, 30);
  SolverConfig cfg;
  CHECK_THROWS_AS(kse::train(X, Eigen::MatrixXd::Zero(19, 1), KernelParams{1, 1}, cfg), kse::DataError);
  Eigen::MatrixXd bad = Eigen::MatrixXd::Zero(20, 1);
  bad(3, 0) = NAN;
  CHECK_THROWS_AS(kse::train(X, bad, KernelParams{1, 1}, cfg), kse::DataError);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(kse::train(X, Eigen::MatrixXd::Zero(20, 1), KernelParams{1, 1}, cfg), kse::ConfigError);
}

TEST_CASE("train_precomputed agrees with the feature route") {
  const Eigen::MatrixXd X = random_points(160, 6, 31);
  const Eigen::MatrixXd Y = smooth_targets(X);
  const Eigen::MatrixXd Xv = random_points(50, 6, 32);
  const Eigen::MatrixXd Yv = smooth_targets(Xv);
  const KernelParams p{0.5, 1.5};
  SolverConfig cfg;
  cfg.q = 20;
  cfg.batch_size = 32;
  cfg.max_epochs = 6;
  cfg.patience = 6;
  const Eigen::MatrixXd P = kse::distance_powers(kse::squared_distances(X), p.gamma);
  const Eigen::MatrixXd Pv = kse::distance_powers(kse::squared_distances(Xv, X), p.gamma);
  const auto a = kse::train(X, Y, p, cfg, kse::ValidationSet{Xv, Yv});
  const auto b = kse::train_precomputed(P, Y, p, cfg, &Pv, &Yv);
  REQUIRE(a.loss_history.size() == b.loss_history.size());
  for (std::size_t i = 0; i < a.loss_history.size(); ++i) {
    CHECK(a.loss_history[i] == doctest::Approx(b.loss_history[i]).epsilon(1e-9));
  }
}
