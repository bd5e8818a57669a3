#pragma once

// Subband kernel machines: the target channels are cut into b contiguous
// blocks and each block gets its own tuned kernel and coefficients.

#include <Eigen/Dense>

#include <optional>
#include <utility>
#include <vector>

#include "kse/autotune.hpp"
#include "kse/dataset.hpp"
#include "kse/eigenpro.hpp"

namespace kse {

struct ChannelPartition {
  Eigen::Index n_channels = 0;
  std::vector<std::pair<Eigen::Index, Eigen::Index>> bounds;  // half-open [start, end)

  Eigen::Index size() const { return static_cast<Eigen::Index>(bounds.size()); }
  Eigen::Index width(std::size_t i) const { return bounds[i].second - bounds[i].first; }
  /// Index of the range holding channel c.
  std::size_t owner(Eigen::Index c) const;
};

/// Widths differ by at most one; the remainder goes to the lowest subbands.
ChannelPartition make_partition(Eigen::Index n_channels, Eigen::Index b);

/// Throws DataError unless the ranges exactly tile [0, n_channels).
void validate(const ChannelPartition& partition);

struct TrainSummary {
  int epochs_run = 0;
  int best_epoch = 0;
  bool early_stopped = false;
  double step_size = 0.0;
  Eigen::Index rank = 0;
  std::vector<double> loss_history;
};

struct SubbandModel {
  ChannelPartition partition;
  std::vector<KernelModel> models;
  std::vector<TuneResult> tune_results;
  std::vector<TrainSummary> training;  // empty for a model read back from disk

  Eigen::Index channels() const { return partition.n_channels; }
  Eigen::Index dim() const { return models.empty() ? 0 : models.front().dim(); }
};

enum class DistanceReuse { automatic, never, always };

/// Training rows x training rows entries above which `automatic` falls back
/// to recomputing kernel rows from features every epoch.
inline constexpr Eigen::Index kReuseEntryCap = Eigen::Index{80'000'000};

struct SubbandOptions {
  int workers = 1;
  // Pairwise distances of the full training set computed once and shared by
  // every subband, instead of kernel rows rebuilt from features each epoch.
  DistanceReuse reuse = DistanceReuse::automatic;
  // Skip autotune and use these parameters in every subband.
  std::optional<KernelParams> fixed;
  // Skip autotune and use these results, one per subband.
  std::optional<std::vector<TuneResult>> tuned;
};

struct SubbandTuning {
  TuneResult result;
  std::vector<Evaluation> memo;  // every cross-validated pair, evaluation order
  std::size_t trainings = 0;
};

/// Autotune alone, one run per range of `partition`, all on the same
/// subsamples.
std::vector<SubbandTuning> tune_subbands(const Dataset& train, const Dataset& val,
                                         const ChannelPartition& partition,
                                         const SearchSpace& space, const SolverConfig& cfg,
                                         int workers = 1);

SubbandModel train_subband(const Dataset& train, const Dataset& val, Eigen::Index b,
                           const SearchSpace& space, const SolverConfig& cfg,
                           const SubbandOptions& options = {});

/// Concatenated subband predictions, clipped to [0, 1].
Eigen::MatrixXd predict_mask(const SubbandModel& model, const FeatureMatrix& X);

/// Unclipped concatenation.
Eigen::MatrixXd predict_raw(const SubbandModel& model, const FeatureMatrix& X);

/// 1 where mask >= threshold, else 0.
Eigen::MatrixXd binarize_mask(const Eigen::MatrixXd& mask, double threshold = 0.5);

}  // namespace kse
