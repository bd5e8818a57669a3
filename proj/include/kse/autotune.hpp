#pragma once

// Automatic kernel selection: for every shape gamma in a grid, a recursive
// four-point bracket search over the bandwidth with memoized
// cross-validation, then the argmin over the per-gamma winners.

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <tuple>
#include <utility>
#include <vector>

#include "kse/dataset.hpp"
#include "kse/eigenpro.hpp"

namespace kse {

/// How search coordinates map to bandwidths.
///   linear:        sigma = u
///   log2_relative: sigma = median_distance^gamma * 2^(u / steps_per_octave)
/// where median_distance is the median pairwise distance of the training
/// subsample.
enum class BandwidthScale { linear, log2_relative };

struct SearchSpace {
  std::vector<double> gammas{0.5, 1.0, 2.0};
  double sigma_lo = 1.0;  // search coordinate bounds
  double sigma_hi = 64.0;
  Eigen::Index subsample_train = 2000;
  Eigen::Index subsample_val = 1000;
  std::uint64_t seed = 0;
  BandwidthScale scale = BandwidthScale::linear;
  double steps_per_octave = 4.0;
};

void validate(const SearchSpace& space);

struct Evaluation {
  double gamma = 0.0;
  double sigma = 0.0;
  double loss = 0.0;
  bool cached = false;  // served from an earlier run's memo
};

struct TuneResult {
  double gamma_opt = 0.0;
  double sigma_opt = 0.0;
  std::vector<Evaluation> evaluations;  // distinct pairs, evaluation order
  // (gamma, sigma_gamma, loss) per grid entry, grid order. The loss is NaN
  // for a singleton grid, which needs no comparison.
  std::vector<Evaluation> candidates;
};

/// Search coordinate -> objective value, for every point evaluated so far.
using SearchMemo = std::map<double, double>;

struct SearchTrace {
  int depth = 0;        // levels that evaluated the objective
  int evaluations = 0;  // calls of f not served by the memo
  std::vector<std::pair<double, double>> brackets;
  std::vector<double> visited;  // distinct points used, first-use order
};

/// Four-point bracket search on [lo, hi]. Returns lo once hi - lo <= 2.
/// Interior points reuse values already in `memo` when one lies strictly
/// inside the bracket, else split it into equal thirds.
double search(const std::function<double(double)>& f, double lo, double hi,
              SearchMemo* memo = nullptr, SearchTrace* trace = nullptr);

/// Subsampled tuning problem shared by every subband: fixed row subsets and
/// their pairwise distances (powers cached per gamma).
class TuningData {
 public:
  TuningData(const FeatureMatrix& X_train, const FeatureMatrix& X_val, Eigen::Index n_train,
             Eigen::Index n_val, std::uint64_t seed);

  const std::vector<Eigen::Index>& train_rows() const { return train_rows_; }
  const std::vector<Eigen::Index>& val_rows() const { return val_rows_; }
  double median_distance() const { return median_distance_; }

  struct Powers {
    Eigen::MatrixXd train;  // ||x_i - x_j||^gamma over the training subsample
    Eigen::MatrixXd val;    // validation subsample x training subsample
  };
  std::shared_ptr<const Powers> powers(double gamma) const;

 private:
  std::vector<Eigen::Index> train_rows_;
  std::vector<Eigen::Index> val_rows_;
  Eigen::MatrixXd train_sq_;
  Eigen::MatrixXd val_sq_;
  double median_distance_ = 1.0;
  mutable std::mutex mutex_;
  mutable std::map<double, std::shared_ptr<const Powers>> cache_;
};

/// Memoized cross_validate(gamma, sigma): trains on the training subsample
/// and returns validation MSE. Divergent configurations yield +infinity.
class CrossValidator {
 public:
  CrossValidator(std::shared_ptr<const TuningData> data, const Eigen::MatrixXd& Y_train,
                 const Eigen::MatrixXd& Y_val, SolverConfig cfg);
  CrossValidator(const Dataset& train, const Dataset& val, const SearchSpace& space,
                 SolverConfig cfg);

  double operator()(double gamma, double sigma);
  bool contains(double gamma, double sigma) const;

  std::size_t trainings() const { return trainings_; }
  std::size_t epochs_trained() const { return epochs_; }
  const TuningData& data() const { return *data_; }
  const std::vector<Evaluation>& memo_table() const { return table_; }

  /// Maps a search coordinate to a bandwidth under `space`.
  double sigma_of(double u, double gamma, const SearchSpace& space) const;

  SearchMemo& search_memo(double gamma, const SearchSpace& space);

 private:
  using Key = std::pair<std::uint64_t, std::uint64_t>;
  std::shared_ptr<const TuningData> data_;
  Eigen::MatrixXd Y_train_;
  Eigen::MatrixXd Y_val_;
  SolverConfig cfg_;
  std::map<Key, std::size_t> memo_;  // index into table_
  std::vector<Evaluation> table_;
  std::map<std::tuple<std::uint64_t, int, std::uint64_t>, SearchMemo> search_memos_;
  std::size_t trainings_ = 0;
  std::size_t epochs_ = 0;
};

TuneResult autotune(CrossValidator& cv, const SearchSpace& space);

TuneResult autotune(const Dataset& train, const Dataset& val, const SearchSpace& space,
                    const SolverConfig& cfg);

}  // namespace kse
