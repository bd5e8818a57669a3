#include "kse/eigenpro.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <string>

namespace kse {

namespace {

constexpr double kDegenerateTail = 1e-10;  // relative to the top eigenvalue
constexpr Eigen::Index kOversample = 20;
constexpr int kPowerIterations = 3;
constexpr Eigen::Index kBlock = 256;

std::vector<Eigen::Index> sample_rows(Eigen::Index n, Eigen::Index m, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(m));
  std::sort(idx.begin(), idx.end());
  return idx;
}

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& A) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(A);
  return qr.householderQ() * Eigen::MatrixXd::Identity(A.rows(), A.cols());
}

// Top `count` eigenpairs of a symmetric PSD matrix, descending.
void top_eigenpairs(const Eigen::MatrixXd& A, Eigen::Index count, std::uint64_t seed,
                    Eigen::VectorXd& values, Eigen::MatrixXd& vectors) {
  const Eigen::Index m = A.rows();
  const Eigen::Index width = std::min(m, count + kOversample);
  if (2 * width >= m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
    if (es.info() != Eigen::Success) throw NumericError("dense eigendecomposition failed");
    values = es.eigenvalues().reverse().head(count);
    vectors = es.eigenvectors().rowwise().reverse().leftCols(count);
    return;
  }
  // Randomized subspace iteration with Rayleigh-Ritz extraction.
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> normal;
  Eigen::MatrixXd omega(m, width);
  for (Eigen::Index j = 0; j < width; ++j) {
    for (Eigen::Index i = 0; i < m; ++i) omega(i, j) = normal(rng);
  }
  Eigen::MatrixXd Q = orthonormalize(A * omega);
  for (int it = 0; it < kPowerIterations; ++it) Q = orthonormalize(A * Q);
  const Eigen::MatrixXd AQ = A * Q;
  Eigen::MatrixXd T = Q.transpose() * AQ;
  T = 0.5 * (T + T.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  if (es.info() != Eigen::Success) throw NumericError("projected eigendecomposition failed");
  values = es.eigenvalues().reverse().head(count);
  vectors = Q * es.eigenvectors().rowwise().reverse().leftCols(count);
}

double mse_accumulate(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  return (pred - target).squaredNorm();
}

// Kernel blocks straight from features.
class FeatureSource {
 public:
  FeatureSource(const FeatureMatrix& X, const KernelParams& params, const FeatureMatrix* Xval)
      : X_(X), params_(params), Xval_(Xval) {}

  Eigen::Index size() const { return X_.rows(); }
  Eigen::Index val_size() const { return Xval_ ? Xval_->rows() : 0; }

  Eigen::MatrixXd rows(const std::vector<Eigen::Index>& idx) const {
    return kernel_matrix(params_, X_(idx, Eigen::all), X_);
  }
  Eigen::MatrixXd row_range(Eigen::Index begin, Eigen::Index count) const {
    return kernel_matrix(params_, X_.middleRows(begin, count), X_);
  }
  Eigen::MatrixXd gram(const std::vector<Eigen::Index>& idx) const {
    return kernel_matrix(params_, X_(idx, Eigen::all));
  }
  Eigen::MatrixXd val_range(Eigen::Index begin, Eigen::Index count) const {
    return kernel_matrix(params_, Xval_->middleRows(begin, count), X_);
  }

 private:
  const FeatureMatrix& X_;
  KernelParams params_;
  const FeatureMatrix* Xval_;
};

// Kernel blocks from cached distance powers.
class PowerSource {
 public:
  PowerSource(const Eigen::MatrixXd& P, double sigma, const Eigen::MatrixXd* Pval)
      : P_(P), sigma_(sigma), Pval_(Pval) {}

  Eigen::Index size() const { return P_.rows(); }
  Eigen::Index val_size() const { return Pval_ ? Pval_->rows() : 0; }

  Eigen::MatrixXd rows(const std::vector<Eigen::Index>& idx) const {
    return kernel_from_powers(P_(idx, Eigen::all), sigma_);
  }
  Eigen::MatrixXd row_range(Eigen::Index begin, Eigen::Index count) const {
    return kernel_from_powers(P_.middleRows(begin, count), sigma_);
  }
  Eigen::MatrixXd gram(const std::vector<Eigen::Index>& idx) const {
    return kernel_from_powers(P_(idx, idx), sigma_);
  }
  Eigen::MatrixXd val_range(Eigen::Index begin, Eigen::Index count) const {
    return kernel_from_powers(Pval_->middleRows(begin, count), sigma_);
  }

 private:
  const Eigen::MatrixXd& P_;
  double sigma_;
  const Eigen::MatrixXd* Pval_;
};

template <typename Source>
EigenSystem eigensystem_with_retry(const Source& src, Eigen::Index q, Eigen::Index m,
                                   std::uint64_t seed) {
  for (int attempt = 0;; ++attempt) {
    try {
      const auto rows = sample_rows(src.size(), m, seed + static_cast<std::uint64_t>(attempt));
      EigenSystem es = eigensystem_from_gram(src.gram(rows), q, seed + attempt);
      es.rows = rows;
      return es;
    } catch (const NumericError&) {
      if (attempt >= 1) throw;
    }
  }
}

template <typename Source>
double loss_on(const Source& src, const Eigen::MatrixXd& alpha, const Eigen::MatrixXd& target,
               bool validation) {
  const Eigen::Index n = target.rows();
  double sum = 0.0;
  for (Eigen::Index r0 = 0; r0 < n; r0 += kBlock) {
    const Eigen::Index rows = std::min(kBlock, n - r0);
    const Eigen::MatrixXd K = validation ? src.val_range(r0, rows) : src.row_range(r0, rows);
    sum += mse_accumulate(K * alpha, target.middleRows(r0, rows));
  }
  return sum / static_cast<double>(n * target.cols());
}

template <typename Source>
TrainResult train_impl(const Source& src, const Eigen::MatrixXd& Y, const KernelParams& params,
                       const SolverConfig& cfg, const Eigen::MatrixXd* Y_val) {
  validate(cfg);
  const Eigen::Index n = src.size();
  if (n == 0) throw DataError("train: empty training set");
  if (Y.rows() != n) {
    throw DataError("train: " + std::to_string(n) + " samples but " + std::to_string(Y.rows()) +
                    " target rows");
  }
  if (!Y.allFinite()) throw DataError("train: non-finite targets");
  const bool has_val = Y_val != nullptr;
  if (has_val) {
    if (Y_val->rows() != src.val_size() || Y_val->cols() != Y.cols()) {
      throw DataError("train: validation targets do not match validation features");
    }
  }

  const Eigen::Index m = std::min(cfg.m, n);
  const Eigen::Index q = std::min(cfg.q, m - 1);
  const Eigen::Index batch = std::min(cfg.batch_size, n);

  const EigenSystem es = eigensystem_with_retry(src, q, m, cfg.seed);

  // Rank-q correction through the Nystrom eigenfunctions:
  //   alpha_S += (eta / |B|) Phi Phi^T K(S, B) g,
  //   Phi_i = e_i * sqrt(1 - tail / lambda_i).
  Eigen::MatrixXd phi = es.coeffs;
  for (Eigen::Index i = 0; i < es.rank(); ++i) {
    phi.col(i) *= std::sqrt(1.0 - es.tail / es.eigenvalues(i));
  }
  // step_scale times the critical mini-batch step 2|B| / (beta + (|B| - 1) tail)
  // for a preconditioned spectrum topped by `tail`, with beta = max k(x, x) = 1.
  const double bsz = static_cast<double>(batch);
  const double eta = cfg.step_scale * 2.0 * bsz / (1.0 + (bsz - 1.0) * es.tail);

  TrainResult result;
  result.step_size = eta;
  result.tail_eigenvalue = es.tail;
  result.rank = q;
  result.model.params = params;

  Eigen::MatrixXd alpha = Eigen::MatrixXd::Zero(n, Y.cols());
  Eigen::MatrixXd best_alpha = alpha;
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;

  std::mt19937_64 rng(cfg.seed ^ 0xd1b54a32d192ed03ULL);
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::vector<Eigen::Index> idx;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index b0 = 0; b0 < n; b0 += batch) {
      const Eigen::Index count = std::min(batch, n - b0);
      idx.assign(order.begin() + b0, order.begin() + b0 + count);
      const Eigen::MatrixXd Kb = src.rows(idx);
      const Eigen::MatrixXd g = Kb * alpha - Y(idx, Eigen::all);
      const double step = eta / static_cast<double>(count);
      alpha(idx, Eigen::all) -= step * g;
      if (q > 0) {
        const Eigen::MatrixXd proj = phi.transpose() * (Kb(Eigen::all, es.rows).transpose() * g);
        alpha(es.rows, Eigen::all) += step * (phi * proj);
      }
    }

    const double loss = has_val ? loss_on(src, alpha, *Y_val, true) : loss_on(src, alpha, Y, false);
    result.loss_history.push_back(loss);
    result.epochs_run = epoch;
    if (!std::isfinite(loss)) {
      std::ostringstream os;
      os << "EigenPro iteration diverged at epoch " << epoch << " (step size " << eta
         << ", tail eigenvalue " << es.tail << ")";
      throw NumericError(os.str());
    }
    if (loss < best_loss) {
      best_loss = loss;
      best_alpha = alpha;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  result.model.alpha = std::move(best_alpha);
  return result;
}

}  // namespace

void validate(const SolverConfig& cfg) {
  if (cfg.q < 0) throw ConfigError("solver q must be >= 0");
  if (cfg.m < 1) throw ConfigError("solver m must be >= 1");
  if (cfg.batch_size < 1) throw ConfigError("solver batch_size must be >= 1");
  if (cfg.max_epochs < 1) throw ConfigError("solver max_epochs must be >= 1");
  if (cfg.patience < 1) throw ConfigError("solver patience must be >= 1");
  if (!(cfg.step_scale > 0.0) || !std::isfinite(cfg.step_scale)) {
    throw ConfigError("solver step_scale must be positive");
  }
}

EigenSystem eigensystem_from_gram(const Eigen::MatrixXd& gram, Eigen::Index q, std::uint64_t seed) {
  const Eigen::Index m = gram.rows();
  if (q < 0 || q >= m) {
    throw ConfigError("eigensystem rank q=" + std::to_string(q) + " must be < subsample size m=" +
                      std::to_string(m));
  }
  const double inv_m = 1.0 / static_cast<double>(m);
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;
  top_eigenpairs(gram * inv_m, q + 1, seed, values, vectors);

  const double top = values(0);
  const double tail = values(q);
  if (!(top > 0.0) || !(tail > kDegenerateTail * top)) {
    std::ostringstream os;
    os << "degenerate kernel subsample: eigenvalue " << q + 1 << " is " << tail << " (top " << top
       << ")";
    throw NumericError(os.str());
  }

  EigenSystem es;
  es.eigenvalues = values.head(q);
  es.tail = tail;
  es.coeffs.resize(m, q);
  for (Eigen::Index i = 0; i < q; ++i) {
    es.coeffs.col(i) = vectors.col(i) / std::sqrt(static_cast<double>(m) * values(i));
  }
  es.rows.resize(static_cast<std::size_t>(m));
  std::iota(es.rows.begin(), es.rows.end(), Eigen::Index{0});
  return es;
}

EigenSystem estimate_eigensystem(const FeatureMatrix& X, const KernelParams& params, Eigen::Index q,
                                 Eigen::Index m, std::uint64_t seed) {
  if (m < 1 || m > X.rows()) {
    throw ConfigError("subsample size m=" + std::to_string(m) + " must be in [1, " +
                      std::to_string(X.rows()) + "]");
  }
  if (q >= m) {
    throw ConfigError("eigensystem rank q=" + std::to_string(q) + " must be < m=" + std::to_string(m));
  }
  return eigensystem_with_retry(FeatureSource(X, params, nullptr), q, m, seed);
}

TrainResult train(std::shared_ptr<const FeatureMatrix> X, const Eigen::MatrixXd& Y,
                  const KernelParams& params, const SolverConfig& cfg,
                  std::optional<ValidationSet> val) {
  if (!X) throw DataError("train: null feature matrix");
  if (val && val->X.cols() != X->cols()) {
    throw DataError("train: validation feature dimension " + std::to_string(val->X.cols()) +
                    " != " + std::to_string(X->cols()));
  }
  const FeatureSource src(*X, params, val ? &val->X : nullptr);
  TrainResult result = train_impl(src, Y, params, cfg, val ? &val->Y : nullptr);
  result.model.support = std::move(X);
  return result;
}

TrainResult train(const FeatureMatrix& X, const Eigen::MatrixXd& Y, const KernelParams& params,
                  const SolverConfig& cfg, std::optional<ValidationSet> val) {
  return train(std::make_shared<const FeatureMatrix>(X), Y, params, cfg, val);
}

TrainResult train_precomputed(const Eigen::MatrixXd& train_powers, const Eigen::MatrixXd& Y,
                              const KernelParams& params, const SolverConfig& cfg,
                              const Eigen::MatrixXd* val_powers, const Eigen::MatrixXd* Y_val) {
  if (train_powers.rows() != train_powers.cols()) {
    throw DataError("train_precomputed: training powers must be square");
  }
  if ((val_powers == nullptr) != (Y_val == nullptr)) {
    throw DataError("train_precomputed: validation powers and targets must be given together");
  }
  if (val_powers && val_powers->cols() != train_powers.rows()) {
    throw DataError("train_precomputed: validation powers column count mismatch");
  }
  const PowerSource src(train_powers, params.sigma, val_powers);
  return train_impl(src, Y, params, cfg, Y_val);
}

Eigen::MatrixXd predict(const KernelModel& model, const FeatureMatrix& X) {
  if (!model.support) throw DataError("predict: model has no support points");
  if (X.cols() != model.support->cols()) {
    throw DataError("predict: feature dimension " + std::to_string(X.cols()) + " != model " +
                    std::to_string(model.support->cols()));
  }
  Eigen::MatrixXd out(X.rows(), model.alpha.cols());
  for (Eigen::Index r0 = 0; r0 < X.rows(); r0 += kBlock) {
    const Eigen::Index rows = std::min(kBlock, X.rows() - r0);
    out.middleRows(r0, rows).noalias() =
        kernel_matrix(model.params, X.middleRows(r0, rows), *model.support) * model.alpha;
  }
  return out;
}

KernelModel direct_solve(const FeatureMatrix& X, const Eigen::MatrixXd& Y,
                         const KernelParams& params, double ridge, Eigen::Index cap) {
  const Eigen::Index n = X.rows();
  if (n > cap) {
    throw BudgetError("direct_solve: n=" + std::to_string(n) + " exceeds dense cap " +
                      std::to_string(cap));
  }
  if (Y.rows() != n) throw DataError("direct_solve: target row count mismatch");
  if (!(ridge >= 0.0)) throw ConfigError("direct_solve: ridge must be nonnegative");

  Eigen::MatrixXd K = kernel_matrix(params, X);
  K.diagonal().array() += ridge;
  Eigen::LLT<Eigen::MatrixXd> llt(K);
  const Eigen::ArrayXd pivots = llt.matrixLLT().diagonal().array().square();
  if (llt.info() != Eigen::Success || !(pivots.minCoeff() > 1e-13 * pivots.maxCoeff())) {
    const Eigen::LDLT<Eigen::MatrixXd> ldlt(K);
    std::ostringstream os;
    os << "direct_solve: factorization failed, smallest pivot "
       << ldlt.vectorD().cwiseAbs().minCoeff();
    throw NumericError(os.str());
  }
  KernelModel model;
  model.params = params;
  model.support = std::make_shared<const FeatureMatrix>(X);
  model.alpha = llt.solve(Y);
  return model;
}

}  // namespace kse
