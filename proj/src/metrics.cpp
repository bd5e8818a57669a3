#include "kse/metrics.hpp"

#include <string>

namespace kse {

namespace {

void require_aligned(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, const char* what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DataError(std::string(what) + ": shapes differ (" + std::to_string(a.rows()) + "x" +
                    std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                    std::to_string(b.cols()) + ")");
  }
  if (a.size() == 0) throw DataError(std::string(what) + ": empty input");
}

bool is_binary(const Eigen::MatrixXd& m) {
  return ((m.array() == 0.0) || (m.array() == 1.0)).all();
}

}  // namespace

double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  require_aligned(pred, target, "mse");
  return mse_per_channel(pred, target).mean();
}

Eigen::VectorXd mse_per_channel(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  require_aligned(pred, target, "mse_per_channel");
  return (pred - target).array().square().colwise().mean().transpose();
}

double accuracy(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target) {
  require_aligned(pred, target, "accuracy");
  if (!is_binary(pred) || !is_binary(target)) throw DataError("accuracy: inputs must be binary");
  return static_cast<double>((pred.array() == target.array()).count()) /
         static_cast<double>(pred.size());
}

}  // namespace kse
