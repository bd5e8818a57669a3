#pragma once

// Kernel least squares K alpha = Y solved with EigenPro preconditioned
// stochastic iteration, plus a dense direct solver for small problems.

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <vector>

#include "kse/kernel.hpp"

namespace kse {

struct SolverConfig {
  Eigen::Index q = 160;          // preconditioner rank
  Eigen::Index m = 4800;         // Nystrom subsample size, clamped to n
  Eigen::Index batch_size = 256;
  int max_epochs = 20;
  int patience = 2;              // epochs without validation improvement
  double step_scale = 0.5;
  std::uint64_t seed = 0;
};

/// Throws ConfigError for out-of-range fields.
void validate(const SolverConfig& cfg);

/// f(x) = sum_j alpha(j, :) k(x, support_j).
struct KernelModel {
  KernelParams params;
  std::shared_ptr<const FeatureMatrix> support;
  Eigen::MatrixXd alpha;  // support rows x targets

  Eigen::Index dim() const { return support ? support->cols() : 0; }
  Eigen::Index outputs() const { return alpha.cols(); }
};

/// Top of the spectrum of K_S / m on an m-point subsample S.
struct EigenSystem {
  Eigen::VectorXd eigenvalues;     // q values, descending, all > 0
  double tail = 0.0;               // eigenvalue q + 1
  Eigen::MatrixXd coeffs;          // m x q, RKHS-normalized Nystrom eigenfunctions
  std::vector<Eigen::Index> rows;  // subsample indices (sorted) into the source matrix

  Eigen::Index rank() const { return eigenvalues.size(); }
  Eigen::Index subsample_size() const { return static_cast<Eigen::Index>(rows.size()); }
};

EigenSystem estimate_eigensystem(const FeatureMatrix& X, const KernelParams& params, Eigen::Index q,
                                 Eigen::Index m, std::uint64_t seed);

/// Eigensystem of a given m x m Gram block (already evaluated on the subsample).
EigenSystem eigensystem_from_gram(const Eigen::MatrixXd& gram, Eigen::Index q, std::uint64_t seed);

struct ValidationSet {
  const FeatureMatrix& X;
  const Eigen::MatrixXd& Y;
};

struct TrainResult {
  KernelModel model;
  std::vector<double> loss_history;  // one entry per epoch run
  int epochs_run = 0;
  int best_epoch = 0;                // 1-based epoch whose coefficients were kept
  bool early_stopped = false;
  double step_size = 0.0;
  double tail_eigenvalue = 0.0;
  Eigen::Index rank = 0;             // preconditioner rank actually used
};

/// EigenPro iteration. Loss is validation MSE when `val` is given, training
/// MSE otherwise. Throws NumericError on divergence.
TrainResult train(std::shared_ptr<const FeatureMatrix> X, const Eigen::MatrixXd& Y,
                  const KernelParams& params, const SolverConfig& cfg,
                  std::optional<ValidationSet> val = std::nullopt);

TrainResult train(const FeatureMatrix& X, const Eigen::MatrixXd& Y, const KernelParams& params,
                  const SolverConfig& cfg, std::optional<ValidationSet> val = std::nullopt);

/// Same iteration driven by precomputed distance powers ||x_i - x_j||^gamma
/// (training x training and validation x training). The returned model has
/// no support matrix; only its coefficients and losses are meaningful.
TrainResult train_precomputed(const Eigen::MatrixXd& train_powers, const Eigen::MatrixXd& Y,
                              const KernelParams& params, const SolverConfig& cfg,
                              const Eigen::MatrixXd* val_powers = nullptr,
                              const Eigen::MatrixXd* Y_val = nullptr);

Eigen::MatrixXd predict(const KernelModel& model, const FeatureMatrix& X);

inline constexpr Eigen::Index kDirectSolveCap = 4096;

/// Solves (K + ridge I) alpha = Y by Cholesky. Throws NumericError with the
/// smallest pivot when K + ridge I is not numerically positive definite.
KernelModel direct_solve(const FeatureMatrix& X, const Eigen::MatrixXd& Y,
                         const KernelParams& params, double ridge,
                         Eigen::Index cap = kDirectSolveCap);

}  // namespace kse
