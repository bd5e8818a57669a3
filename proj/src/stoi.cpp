#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <vector>

#include "kse/metrics.hpp"
#include "kse/resample.hpp"

namespace kse {

namespace {

constexpr double kRate = 10000.0;
constexpr Eigen::Index kFrame = 256;
constexpr Eigen::Index kHop = kFrame / 2;
constexpr Eigen::Index kFft = 512;
constexpr int kBands = 15;
constexpr double kMinFreq = 150.0;
constexpr Eigen::Index kSegment = 30;
constexpr double kBeta = -15.0;
constexpr double kDynRange = 40.0;
constexpr double kEps = std::numeric_limits<double>::epsilon();

// Hann of length N + 2 without its zero end points.
Eigen::VectorXd stoi_window() {
  Eigen::VectorXd w(kFrame);
  for (Eigen::Index i = 0; i < kFrame; ++i) {
    w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i + 1) /
                                static_cast<double>(kFrame + 1));
  }
  return w;
}

// Drops frames more than 40 dB below the loudest clean frame and overlap-adds
// the rest back together.
void remove_silence(const Eigen::VectorXd& x, const Eigen::VectorXd& y, Eigen::VectorXd& xs,
                    Eigen::VectorXd& ys) {
  const Eigen::VectorXd w = stoi_window();
  std::vector<Eigen::Index> starts;
  std::vector<double> energy;
  for (Eigen::Index s = 0; s + kFrame < x.size(); s += kHop) {
    starts.push_back(s);
    energy.push_back(20.0 * std::log10(x.segment(s, kFrame).cwiseProduct(w).norm() + kEps));
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (double e : energy) peak = std::max(peak, e);
  std::vector<Eigen::Index> kept;
  for (std::size_t i = 0; i < starts.size(); ++i) {
    if (peak - kDynRange - energy[i] < 0.0) kept.push_back(starts[i]);
  }
  const auto n = static_cast<Eigen::Index>(kept.size());
  const Eigen::Index len = n == 0 ? 0 : (n - 1) * kHop + kFrame;
  xs = Eigen::VectorXd::Zero(len);
  ys = Eigen::VectorXd::Zero(len);
  for (Eigen::Index k = 0; k < n; ++k) {
    const auto s = kept[static_cast<std::size_t>(k)];
    xs.segment(k * kHop, kFrame) += x.segment(s, kFrame).cwiseProduct(w);
    ys.segment(k * kHop, kFrame) += y.segment(s, kFrame).cwiseProduct(w);
  }
}

// Third-octave band matrix over the kFft / 2 + 1 one-sided bins.
Eigen::MatrixXd band_matrix() {
  const Eigen::Index bins = kFft / 2 + 1;
  Eigen::MatrixXd obm = Eigen::MatrixXd::Zero(kBands, bins);
  auto nearest = [&](double f) {
    Eigen::Index best = 0;
    double dist = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < bins; ++k) {
      const double d = std::abs(static_cast<double>(k) * kRate / static_cast<double>(kFft) - f);
      if (d < dist) {
        dist = d;
        best = k;
      }
    }
    return best;
  };
  for (int b = 0; b < kBands; ++b) {
    const double lo = kMinFreq * std::pow(2.0, (2.0 * b - 1.0) / 6.0);
    const double hi = kMinFreq * std::pow(2.0, (2.0 * b + 1.0) / 6.0);
    const Eigen::Index a = nearest(lo);
    const Eigen::Index z = nearest(hi);
    for (Eigen::Index k = a; k < z; ++k) obm(b, k) = 1.0;
  }
  return obm;
}

// Band envelopes, bands x frames.
Eigen::MatrixXd band_envelopes(const Eigen::VectorXd& x, const Eigen::MatrixXd& obm) {
  const Eigen::VectorXd w = stoi_window();
  std::vector<Eigen::Index> starts;
  for (Eigen::Index s = 0; s < x.size() - kFrame; s += kHop) starts.push_back(s);
  const Eigen::Index bins = kFft / 2 + 1;
  Eigen::MatrixXd power(bins, static_cast<Eigen::Index>(starts.size()));
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buf(kFft, 0.0);
  std::vector<std::complex<double>> spec;
  for (std::size_t f = 0; f < starts.size(); ++f) {
    for (Eigen::Index i = 0; i < kFrame; ++i) buf[static_cast<std::size_t>(i)] = x[starts[f] + i] * w[i];
    fft.fwd(spec, buf);
    for (Eigen::Index k = 0; k < bins; ++k) power(k, static_cast<Eigen::Index>(f)) = std::norm(spec[static_cast<std::size_t>(k)]);
  }
  return (obm * power).cwiseSqrt();
}

}  // namespace

double stoi(const Waveform& clean, const Waveform& processed) {
  if (clean.size() != processed.size()) {
    throw DataError("stoi: lengths differ (" + std::to_string(clean.size()) + " vs " +
                    std::to_string(processed.size()) + ")");
  }
  if (clean.sample_rate != processed.sample_rate) throw DataError("stoi: sample rates differ");
  if (!(clean.samples.squaredNorm() > 0.0)) throw DataError("stoi: clean signal has no energy");
  const Waveform x10 = resample(clean, kRate);
  const Waveform y10 = resample(processed, kRate);

  Eigen::VectorXd xs, ys;
  remove_silence(x10.samples, y10.samples, xs, ys);
  if (xs.size() <= kFrame) throw DataError("stoi: too little active signal");
  const Eigen::MatrixXd obm = band_matrix();
  const Eigen::MatrixXd X = band_envelopes(xs, obm);
  const Eigen::MatrixXd Y = band_envelopes(ys, obm);
  if (X.cols() < kSegment) {
    throw DataError("stoi: need at least " + std::to_string(kSegment) +
                    " active frames, got " + std::to_string(X.cols()));
  }

  const double clip = std::pow(10.0, -kBeta / 20.0);
  double total = 0.0;
  Eigen::Index count = 0;
  for (Eigen::Index m = kSegment; m <= X.cols(); ++m) {
    for (int b = 0; b < kBands; ++b) {
      const Eigen::RowVectorXd xseg = X.block(b, m - kSegment, 1, kSegment);
      Eigen::RowVectorXd yseg = Y.block(b, m - kSegment, 1, kSegment);
      yseg *= xseg.norm() / (yseg.norm() + kEps);
      yseg = yseg.cwiseMin(xseg * (1.0 + clip));
      Eigen::RowVectorXd xn = xseg.array() - xseg.mean();
      Eigen::RowVectorXd yn = yseg.array() - yseg.mean();
      xn /= xn.norm() + kEps;
      yn /= yn.norm() + kEps;
      total += xn.dot(yn);
      ++count;
    }
  }
  return std::clamp(total / static_cast<double>(count), 0.0, 1.0);
}

}  // namespace kse
