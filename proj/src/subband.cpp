#include "kse/subband.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <string>
#include <thread>

namespace kse {

namespace {

constexpr Eigen::Index kBlock = 256;

[[noreturn]] void rethrow_annotated(std::exception_ptr ep, std::size_t subband) {
  const std::string prefix = "subband " + std::to_string(subband) + ": ";
  try {
    std::rethrow_exception(ep);
  } catch (const Error& e) {
    switch (e.category()) {
      case ErrorCategory::config: throw ConfigError(prefix + e.what());
      case ErrorCategory::data: throw DataError(prefix + e.what());
      case ErrorCategory::numeric: throw NumericError(prefix + e.what());
      case ErrorCategory::io: throw IoError(prefix + e.what());
    }
    throw;
  }
}

// Runs job(i) for i in [0, n) on up to `workers` threads. Every job runs;
// the failure with the lowest index is rethrown.
template <typename Job>
void run_jobs(std::size_t n, int workers, Job job) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        job(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t threads = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(workers, 1)));
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (errors[i]) rethrow_annotated(errors[i], i);
  }
}

bool shared_support(const SubbandModel& model) {
  for (const auto& m : model.models) {
    if (m.support != model.models.front().support) return false;
  }
  return true;
}

}  // namespace

std::size_t ChannelPartition::owner(Eigen::Index c) const {
  for (std::size_t i = 0; i < bounds.size(); ++i) {
    if (c >= bounds[i].first && c < bounds[i].second) return i;
  }
  throw DataError("channel " + std::to_string(c) + " outside the partition");
}

ChannelPartition make_partition(Eigen::Index n_channels, Eigen::Index b) {
  if (b < 1 || b > n_channels) {
    throw ConfigError("subband count " + std::to_string(b) + " not in [1, " +
                      std::to_string(n_channels) + "]");
  }
  ChannelPartition p;
  p.n_channels = n_channels;
  const Eigen::Index base = n_channels / b;
  const Eigen::Index extra = n_channels % b;
  Eigen::Index start = 0;
  for (Eigen::Index i = 0; i < b; ++i) {
    const Eigen::Index w = base + (i < extra ? 1 : 0);
    p.bounds.emplace_back(start, start + w);
    start += w;
  }
  return p;
}

void validate(const ChannelPartition& partition) {
  Eigen::Index expect = 0;
  for (const auto& [s, e] : partition.bounds) {
    if (s != expect || e <= s) throw DataError("partition ranges must tile the channels");
    expect = e;
  }
  if (partition.bounds.empty() || expect != partition.n_channels) {
    throw DataError("partition does not cover all channels");
  }
}

namespace {

void check_shapes(const Dataset& train, const Dataset& val) {
  if (train.Y.cols() != val.Y.cols()) throw DataError("train and val target widths differ");
  if (train.X.cols() != val.X.cols()) throw DataError("train and val feature widths differ");
  if (train.X.rows() != train.Y.rows() || val.X.rows() != val.Y.rows()) {
    throw DataError("feature and target row counts differ");
  }
}

}  // namespace

std::vector<SubbandTuning> tune_subbands(const Dataset& train, const Dataset& val,
                                         const ChannelPartition& partition,
                                         const SearchSpace& space, const SolverConfig& cfg,
                                         int workers) {
  check_shapes(train, val);
  validate(partition);
  if (partition.n_channels != train.Y.cols()) throw DataError("partition does not match the targets");
  validate(space);
  validate(cfg);
  const auto tuning = std::make_shared<const TuningData>(train.X, val.X, space.subsample_train,
                                                         space.subsample_val, space.seed);
  std::vector<SubbandTuning> out(partition.bounds.size());
  run_jobs(out.size(), workers, [&](std::size_t i) {
    const auto [start, end] = partition.bounds[i];
    CrossValidator cv(tuning, train.Y.middleCols(start, end - start), val.Y.middleCols(start, end - start), cfg);
    out[i].result = autotune(cv, space);
    out[i].memo = cv.memo_table();
    out[i].trainings = cv.trainings();
  });
  return out;
}

SubbandModel train_subband(const Dataset& train, const Dataset& val, Eigen::Index b,
                           const SearchSpace& space, const SolverConfig& cfg,
                           const SubbandOptions& options) {
  check_shapes(train, val);
  validate(cfg);
  SubbandModel out;
  out.partition = make_partition(train.Y.cols(), b);
  const std::size_t n = out.partition.bounds.size();
  out.models.resize(n);
  out.tune_results.resize(n);
  out.training.resize(n);

  if (options.fixed) {
    validate_params(options.fixed->gamma, options.fixed->sigma);
  } else if (options.tuned) {
    if (options.tuned->size() != n) throw ConfigError("one tune result per subband is required");
    out.tune_results = *options.tuned;
  } else {
    auto tuned = tune_subbands(train, val, out.partition, space, cfg, options.workers);
    for (std::size_t i = 0; i < n; ++i) out.tune_results[i] = std::move(tuned[i].result);
  }
  const auto support = std::make_shared<const FeatureMatrix>(train.X);
  const Eigen::Index n_train = train.X.rows();
  const bool reuse = options.reuse == DistanceReuse::always ||
                     (options.reuse == DistanceReuse::automatic && n_train <= kReuseEntryCap / n_train);
  std::shared_ptr<const TuningData> full;
  if (reuse) {
    full = std::make_shared<const TuningData>(train.X, val.X, n_train, val.X.rows(), 0);
  }

  run_jobs(n, options.workers, [&](std::size_t i) {
    const auto [start, end] = out.partition.bounds[i];
    const Eigen::MatrixXd Yt = train.Y.middleCols(start, end - start);
    const Eigen::MatrixXd Yv = val.Y.middleCols(start, end - start);
    KernelParams params;
    if (options.fixed) {
      params = *options.fixed;
      out.tune_results[i].gamma_opt = params.gamma;
      out.tune_results[i].sigma_opt = params.sigma;
    } else {
      params = KernelParams{out.tune_results[i].gamma_opt, out.tune_results[i].sigma_opt};
    }
    TrainResult r;
    if (full) {
      const auto powers = full->powers(params.gamma);
      r = train_precomputed(powers->train, Yt, params, cfg, &powers->val, &Yv);
      r.model.support = support;
    } else {
      r = kse::train(support, Yt, params, cfg, ValidationSet{val.X, Yv});
    }
    out.models[i] = std::move(r.model);
    TrainSummary& s = out.training[i];
    s.epochs_run = r.epochs_run;
    s.best_epoch = r.best_epoch;
    s.early_stopped = r.early_stopped;
    s.step_size = r.step_size;
    s.rank = r.rank;
    s.loss_history = std::move(r.loss_history);
  });
  return out;
}

Eigen::MatrixXd predict_raw(const SubbandModel& model, const FeatureMatrix& X) {
  validate(model.partition);
  if (static_cast<std::size_t>(model.partition.size()) != model.models.size()) {
    throw DataError("subband model: partition and model counts differ");
  }
  for (std::size_t i = 0; i < model.models.size(); ++i) {
    const KernelModel& m = model.models[i];
    if (!m.support) throw DataError("subband " + std::to_string(i) + ": no support points");
    if (m.support->cols() != X.cols()) {
      throw DataError("subband " + std::to_string(i) + ": feature dimension " +
                      std::to_string(X.cols()) + " != model " + std::to_string(m.support->cols()));
    }
    if (m.alpha.cols() != model.partition.width(i) || m.alpha.rows() != m.support->rows()) {
      throw DataError("subband " + std::to_string(i) + ": coefficient shape mismatch");
    }
  }
  Eigen::MatrixXd out(X.rows(), model.partition.n_channels);
  if (!shared_support(model)) {
    for (std::size_t i = 0; i < model.models.size(); ++i) {
      const auto [start, end] = model.partition.bounds[i];
      out.middleCols(start, end - start) = predict(model.models[i], X);
    }
    return out;
  }
  // One distance block per row tile serves every subband.
  const FeatureMatrix& S = *model.models.front().support;
  for (Eigen::Index r0 = 0; r0 < X.rows(); r0 += kBlock) {
    const Eigen::Index rows = std::min(kBlock, X.rows() - r0);
    const Eigen::MatrixXd sq = squared_distances(X.middleRows(r0, rows), S);
    for (std::size_t i = 0; i < model.models.size(); ++i) {
      const KernelModel& m = model.models[i];
      const auto [start, end] = model.partition.bounds[i];
      out.block(r0, start, rows, end - start).noalias() = kernel_from_squared(m.params, sq) * m.alpha;
    }
  }
  return out;
}

Eigen::MatrixXd predict_mask(const SubbandModel& model, const FeatureMatrix& X) {
  return predict_raw(model, X).cwiseMax(0.0).cwiseMin(1.0);
}

Eigen::MatrixXd binarize_mask(const Eigen::MatrixXd& mask, double threshold) {
  return (mask.array() >= threshold).cast<double>().matrix();
}

}  // namespace kse
