#pragma once

// Exponential power kernel k(x, z) = exp(-||x - z||^gamma / sigma).
//
// Feature matrices hold one sample per row. Every function here is a pure
// function of its arguments; dense kernel blocks are assembled in fixed
// 256-row tiles so a given entry is always computed by the same sequence of
// floating point operations.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>

#include "kse/error.hpp"

namespace kse {

using FeatureMatrix = Eigen::MatrixXd;

struct KernelParams {
  double gamma = 1.0;  // shape, in (0, 2]
  double sigma = 1.0;  // bandwidth, > 0

  friend bool operator==(const KernelParams&, const KernelParams&) = default;
};

/// Validates raw (gamma, sigma); throws ConfigError naming the offending field.
KernelParams validate_params(double gamma, double sigma);

/// Largest dense kernel block (in entries) built in one call. 2^27 doubles = 1 GiB.
inline constexpr Eigen::Index kDefaultKernelEntryCap = Eigen::Index{1} << 27;

namespace detail {

inline constexpr Eigen::Index kRowTile = 256;

// Entries of the norm expansion below this fraction of ||x||^2 + ||z||^2 are
// dominated by cancellation and get recomputed from the difference vector.
inline constexpr double kCancellationTol = 1e-9;

inline void check_cap(Eigen::Index rows, Eigen::Index cols, Eigen::Index cap) {
  if (cap > 0 && rows > 0 && cols > cap / rows) {
    throw BudgetError("kernel block " + std::to_string(rows) + "x" + std::to_string(cols) +
                      " exceeds entry cap " + std::to_string(cap) + "; batch the rows");
  }
}

template <typename Scalar>
Scalar power_of_squared(Scalar d2, Scalar gamma) {
  if (gamma == Scalar(2)) return d2;
  if (gamma == Scalar(1)) return std::sqrt(d2);
  return std::pow(d2, gamma / Scalar(2));
}

}  // namespace detail

template <typename DerivedX, typename DerivedZ>
typename DerivedX::Scalar eval_kernel(const KernelParams& params,
                                      const Eigen::MatrixBase<DerivedX>& x,
                                      const Eigen::MatrixBase<DerivedZ>& z) {
  using Scalar = typename DerivedX::Scalar;
  if (x.size() != z.size()) {
    throw DataError("eval_kernel: dimension mismatch (" + std::to_string(x.size()) + " vs " +
                    std::to_string(z.size()) + ")");
  }
  const Scalar d2 = (x.derived().reshaped() - z.derived().reshaped()).squaredNorm();
  return std::exp(-detail::power_of_squared(d2, Scalar(params.gamma)) / Scalar(params.sigma));
}

/// Squared Euclidean distances between the rows of X and the rows of Z.
template <typename DerivedX, typename DerivedZ>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, Eigen::Dynamic> squared_distances(
    const Eigen::MatrixBase<DerivedX>& X, const Eigen::MatrixBase<DerivedZ>& Z,
    Eigen::Index entry_cap = kDefaultKernelEntryCap) {
  using Scalar = typename DerivedX::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (X.cols() != Z.cols()) {
    throw DataError("feature dimension mismatch: " + std::to_string(X.cols()) + " vs " +
                    std::to_string(Z.cols()));
  }
  detail::check_cap(X.rows(), Z.rows(), entry_cap);

  const Vector xn = X.rowwise().squaredNorm();
  const Vector zn = Z.rowwise().squaredNorm();
  Matrix D(X.rows(), Z.rows());
  for (Eigen::Index r0 = 0; r0 < X.rows(); r0 += detail::kRowTile) {
    const Eigen::Index rows = std::min(detail::kRowTile, X.rows() - r0);
    auto block = D.middleRows(r0, rows);
    block.noalias() = Scalar(-2) * X.middleRows(r0, rows) * Z.transpose();
    for (Eigen::Index j = 0; j < Z.rows(); ++j) {
      for (Eigen::Index i = 0; i < rows; ++i) {
        const Scalar scale = xn(r0 + i) + zn(j);
        Scalar v = block(i, j) + scale;
        if (v <= Scalar(detail::kCancellationTol) * scale) {
          v = (X.row(r0 + i) - Z.row(j)).squaredNorm();
        }
        block(i, j) = v;
      }
    }
  }
  return D;
}

/// Symmetric variant: exactly symmetric with a zero diagonal.
template <typename DerivedX>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, Eigen::Dynamic> squared_distances(
    const Eigen::MatrixBase<DerivedX>& X, Eigen::Index entry_cap = kDefaultKernelEntryCap) {
  using Scalar = typename DerivedX::Scalar;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const Eigen::Index n = X.rows();
  detail::check_cap(n, n, entry_cap);

  const Vector xn = X.rowwise().squaredNorm();
  Matrix D(n, n);
  // Upper block triangle only; the strict lower triangle is mirrored.
  for (Eigen::Index r0 = 0; r0 < n; r0 += detail::kRowTile) {
    const Eigen::Index rows = std::min(detail::kRowTile, n - r0);
    auto block = D.block(r0, r0, rows, n - r0);
    block.noalias() = Scalar(-2) * X.middleRows(r0, rows) * X.middleRows(r0, n - r0).transpose();
    for (Eigen::Index j = 0; j < n - r0; ++j) {
      for (Eigen::Index i = 0; i < std::min(rows, j + 1); ++i) {
        const Eigen::Index a = r0 + i;
        const Eigen::Index b = r0 + j;
        if (a == b) {
          block(i, j) = Scalar(0);
          continue;
        }
        const Scalar scale = xn(a) + xn(b);
        Scalar v = block(i, j) + scale;
        if (v <= Scalar(detail::kCancellationTol) * scale) {
          v = (X.row(a) - X.row(b)).squaredNorm();
        }
        block(i, j) = v;
      }
    }
  }
  for (Eigen::Index j = 0; j < n; ++j) {
    for (Eigen::Index i = j + 1; i < n; ++i) D(i, j) = D(j, i);
  }
  return D;
}

/// Elementwise d^gamma given squared distances d^2.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> distance_powers(
    const Eigen::MatrixBase<Derived>& squared, double gamma) {
  using Scalar = typename Derived::Scalar;
  const Scalar g(gamma);
  return squared.unaryExpr([g](Scalar d2) { return detail::power_of_squared(d2, g); });
}

/// exp(-P / sigma) for a matrix P of distance powers ||x - z||^gamma.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> kernel_from_powers(
    const Eigen::MatrixBase<Derived>& powers, double sigma) {
  using Scalar = typename Derived::Scalar;
  return (powers.array() * Scalar(-1.0 / sigma)).exp().matrix();
}

/// Kernel values from squared distances.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic> kernel_from_squared(
    const KernelParams& params, const Eigen::MatrixBase<Derived>& squared) {
  return kernel_from_powers(distance_powers(squared, params.gamma), params.sigma);
}

/// K(i, j) = k(X_i, Z_j).
template <typename DerivedX, typename DerivedZ>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, Eigen::Dynamic> kernel_matrix(
    const KernelParams& params, const Eigen::MatrixBase<DerivedX>& X,
    const Eigen::MatrixBase<DerivedZ>& Z, Eigen::Index entry_cap = kDefaultKernelEntryCap) {
  return kernel_from_squared(params, squared_distances(X, Z, entry_cap));
}

/// K(i, j) = k(X_i, X_j); symmetric with unit diagonal.
template <typename DerivedX>
Eigen::Matrix<typename DerivedX::Scalar, Eigen::Dynamic, Eigen::Dynamic> kernel_matrix(
    const KernelParams& params, const Eigen::MatrixBase<DerivedX>& X,
    Eigen::Index entry_cap = kDefaultKernelEntryCap) {
  return kernel_from_squared(params, squared_distances(X, entry_cap));
}

}  // namespace kse
