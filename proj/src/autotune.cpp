#include "kse/autotune.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

namespace kse {

namespace {

constexpr double kTerminationWidth = 2.0;

std::vector<Eigen::Index> subsample(Eigen::Index n, Eigen::Index k, std::mt19937_64& rng) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (k >= n) return idx;
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

// Interior points for one level: reuse evaluated points inside (lo, hi),
// otherwise split into equal thirds.
std::pair<double, double> interior_points(double lo, double hi, const SearchMemo& memo) {
  const double w = hi - lo;
  const double e1 = lo + w / 3.0;
  const double e2 = lo + 2.0 * w / 3.0;
  std::vector<double> inside;
  for (auto it = memo.upper_bound(lo); it != memo.end() && it->first < hi; ++it) {
    inside.push_back(it->first);
  }
  if (inside.empty()) return {e1, e2};
  if (inside.size() == 1) {
    const double p = inside.front();
    if (p <= lo + w / 2.0) return {p, p + (hi - p) / 2.0};
    return {lo + (p - lo) / 2.0, p};
  }
  auto closest = [&](double target, double exclude) {
    double best = std::numeric_limits<double>::quiet_NaN();
    for (double v : inside) {
      if (v == exclude) continue;
      if (std::isnan(best) || std::abs(v - target) < std::abs(best - target)) best = v;
    }
    return best;
  };
  double m1 = closest(e1, std::numeric_limits<double>::quiet_NaN());
  double m2 = closest(e2, m1);
  if (m2 < m1) std::swap(m1, m2);
  return {m1, m2};
}

}  // namespace

void validate(const SearchSpace& space) {
  if (space.gammas.empty()) throw ConfigError("search space: gamma grid is empty");
  for (double g : space.gammas) {
    if (!(g > 0.0 && g <= 2.0)) {
      std::ostringstream os;
      os << "search space: gamma " << g << " out of (0,2]";
      throw ConfigError(os.str());
    }
  }
  if (!std::isfinite(space.sigma_lo) || !std::isfinite(space.sigma_hi) ||
      !(space.sigma_lo < space.sigma_hi)) {
    throw ConfigError("search space: need finite sigma_lo < sigma_hi");
  }
  if (space.scale == BandwidthScale::linear && !(space.sigma_lo > 0.0)) {
    throw ConfigError("search space: linear bandwidth bracket must be positive");
  }
  if (space.scale == BandwidthScale::log2_relative && !(space.steps_per_octave > 0.0)) {
    throw ConfigError("search space: steps_per_octave must be positive");
  }
  if (space.subsample_train < 2 || space.subsample_val < 1) {
    throw ConfigError("search space: subsample sizes too small");
  }
}

double search(const std::function<double(double)>& f, double lo, double hi, SearchMemo* memo,
              SearchTrace* trace) {
  if (!(lo < hi)) throw ConfigError("search: need sigma_l < sigma_h");
  SearchMemo local;
  SearchMemo& values = memo ? *memo : local;
  std::vector<double> used;
  auto eval = [&](double x) {
    if (trace && std::find(used.begin(), used.end(), x) == used.end()) {
      used.push_back(x);
      trace->visited.push_back(x);
    }
    if (auto it = values.find(x); it != values.end()) return it->second;
    double v = f(x);
    if (std::isnan(v)) v = std::numeric_limits<double>::infinity();
    values.emplace(x, v);
    if (trace) ++trace->evaluations;
    return v;
  };

  int depth = 0;
  while (hi - lo > kTerminationWidth) {
    ++depth;
    if (trace) {
      trace->depth = depth;
      trace->brackets.emplace_back(lo, hi);
    }
    const auto [m1, m2] = interior_points(lo, hi, values);
    const std::array<double, 4> pts{lo, m1, m2, hi};
    std::array<double, 4> fx{};
    for (std::size_t i = 0; i < 4; ++i) fx[i] = eval(pts[i]);
    if (std::none_of(fx.begin(), fx.end(), [](double v) { return std::isfinite(v); })) {
      std::ostringstream os;
      os << "search: objective non-finite at all of " << lo << ", " << m1 << ", " << m2 << ", "
         << hi;
      throw NumericError(os.str());
    }
    std::size_t best = 0;
    for (std::size_t i = 1; i < 4; ++i) {
      if (fx[i] < fx[best]) best = i;
    }
    switch (best) {
      case 0: hi = m1; break;
      case 1: hi = m2; break;
      case 2: lo = m1; break;
      default: lo = m2; break;
    }
  }
  return lo;
}

TuningData::TuningData(const FeatureMatrix& X_train, const FeatureMatrix& X_val,
                       Eigen::Index n_train, Eigen::Index n_val, std::uint64_t seed) {
  if (X_train.rows() < 2 || X_val.rows() < 1) throw DataError("autotune: datasets too small");
  if (X_train.cols() != X_val.cols()) throw DataError("autotune: feature dimensions disagree");
  std::mt19937_64 rng(seed);
  train_rows_ = subsample(X_train.rows(), n_train, rng);
  val_rows_ = subsample(X_val.rows(), n_val, rng);
  const FeatureMatrix Xt = X_train(train_rows_, Eigen::all);
  const FeatureMatrix Xv = X_val(val_rows_, Eigen::all);
  train_sq_ = squared_distances(Xt);
  val_sq_ = squared_distances(Xv, Xt);

  std::vector<double> upper;
  const Eigen::Index n = train_sq_.rows();
  upper.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index j = 1; j < n; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) upper.push_back(train_sq_(i, j));
  }
  auto mid = upper.begin() + static_cast<std::ptrdiff_t>(upper.size() / 2);
  std::nth_element(upper.begin(), mid, upper.end());
  median_distance_ = std::sqrt(*mid);
  if (!(median_distance_ > 0.0)) median_distance_ = 1.0;
}

std::shared_ptr<const TuningData::Powers> TuningData::powers(double gamma) const {
  std::lock_guard<std::mutex> lock(mutex_);
  auto& slot = cache_[gamma];
  if (!slot) {
    auto p = std::make_shared<Powers>();
    p->train = distance_powers(train_sq_, gamma);
    p->val = distance_powers(val_sq_, gamma);
    slot = std::move(p);
  }
  return slot;
}

CrossValidator::CrossValidator(std::shared_ptr<const TuningData> data,
                               const Eigen::MatrixXd& Y_train, const Eigen::MatrixXd& Y_val,
                               SolverConfig cfg)
    : data_(std::move(data)), cfg_(cfg) {
  if (!data_) throw DataError("cross-validation: missing tuning data");
  Y_train_ = Y_train(data_->train_rows(), Eigen::all);
  Y_val_ = Y_val(data_->val_rows(), Eigen::all);
  if (Y_train_.cols() != Y_val_.cols()) {
    throw DataError("cross-validation: target widths disagree");
  }
}

CrossValidator::CrossValidator(const Dataset& train, const Dataset& val, const SearchSpace& space,
                               SolverConfig cfg)
    : CrossValidator(std::make_shared<const TuningData>(train.X, val.X, space.subsample_train,
                                                        space.subsample_val, space.seed),
                     train.Y, val.Y, cfg) {}

bool CrossValidator::contains(double gamma, double sigma) const {
  return memo_.count({std::bit_cast<std::uint64_t>(gamma), std::bit_cast<std::uint64_t>(sigma)}) > 0;
}

double CrossValidator::operator()(double gamma, double sigma) {
  const Key key{std::bit_cast<std::uint64_t>(gamma), std::bit_cast<std::uint64_t>(sigma)};
  if (auto it = memo_.find(key); it != memo_.end()) return table_[it->second].loss;

  const KernelParams params = validate_params(gamma, sigma);
  const auto powers = data_->powers(gamma);
  double loss = std::numeric_limits<double>::infinity();
  ++trainings_;
  try {
    const TrainResult r =
        train_precomputed(powers->train, Y_train_, params, cfg_, &powers->val, &Y_val_);
    epochs_ += static_cast<std::size_t>(r.epochs_run);
    loss = r.loss_history[static_cast<std::size_t>(r.best_epoch - 1)];
  } catch (const NumericError&) {
    loss = std::numeric_limits<double>::infinity();
  }
  memo_.emplace(key, table_.size());
  table_.push_back(Evaluation{gamma, sigma, loss, false});
  return loss;
}

double CrossValidator::sigma_of(double u, double gamma, const SearchSpace& space) const {
  if (space.scale == BandwidthScale::linear) return u;
  return std::pow(data_->median_distance(), gamma) * std::exp2(u / space.steps_per_octave);
}

SearchMemo& CrossValidator::search_memo(double gamma, const SearchSpace& space) {
  const auto key = std::make_tuple(std::bit_cast<std::uint64_t>(gamma), static_cast<int>(space.scale),
                                   std::bit_cast<std::uint64_t>(space.steps_per_octave));
  return search_memos_[key];
}

TuneResult autotune(CrossValidator& cv, const SearchSpace& space) {
  validate(space);
  TuneResult result;
  std::vector<std::pair<double, double>> known;
  for (const Evaluation& e : cv.memo_table()) known.emplace_back(e.gamma, e.sigma);
  auto previously_known = [&](double gamma, double sigma) {
    return std::find(known.begin(), known.end(), std::make_pair(gamma, sigma)) != known.end();
  };
  auto record = [&](double gamma, double sigma) {
    const double loss = cv(gamma, sigma);
    const bool listed = std::any_of(result.evaluations.begin(), result.evaluations.end(),
                                    [&](const Evaluation& e) { return e.gamma == gamma && e.sigma == sigma; });
    if (!listed) {
      result.evaluations.push_back(Evaluation{gamma, sigma, loss, previously_known(gamma, sigma)});
    }
    return loss;
  };

  std::vector<std::pair<double, double>> winners;
  for (double gamma : space.gammas) {
    auto f = [&](double u) { return cv(gamma, cv.sigma_of(u, gamma, space)); };
    SearchTrace trace;
    const double u = search(f, space.sigma_lo, space.sigma_hi, &cv.search_memo(gamma, space), &trace);
    for (double v : trace.visited) record(gamma, cv.sigma_of(v, gamma, space));
    winners.emplace_back(gamma, cv.sigma_of(u, gamma, space));
  }

  if (winners.size() == 1) {
    result.gamma_opt = winners.front().first;
    result.sigma_opt = winners.front().second;
    result.candidates.push_back(Evaluation{result.gamma_opt, result.sigma_opt,
                                           std::numeric_limits<double>::quiet_NaN(), false});
    return result;
  }
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  for (const auto& [gamma, sigma] : winners) {
    const double loss = record(gamma, sigma);
    result.candidates.push_back(Evaluation{gamma, sigma, loss, previously_known(gamma, sigma)});
    if (!found || loss < best) {
      best = loss;
      result.gamma_opt = gamma;
      result.sigma_opt = sigma;
      found = true;
    }
  }
  return result;
}

TuneResult autotune(const Dataset& train, const Dataset& val, const SearchSpace& space,
                    const SolverConfig& cfg) {
  validate(space);
  CrossValidator cv(train, val, space, cfg);
  return autotune(cv, space);
}

}  // namespace kse
