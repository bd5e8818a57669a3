#include "kse/resample.hpp"

#include <cmath>
#include <numbers>

namespace kse {

Waveform resample(const Waveform& w, double target_rate) {
  if (!(target_rate > 0.0) || !std::isfinite(target_rate)) {
    throw ConfigError("resample: target rate must be positive");
  }
  if (target_rate == w.sample_rate) return w;
  const double ratio = target_rate / w.sample_rate;
  const double cutoff = std::min(1.0, ratio);  // relative to the input Nyquist
  constexpr int kZeros = 16;
  const double half = kZeros / cutoff;  // half-width in input samples
  const auto n_out = static_cast<Eigen::Index>(std::floor(static_cast<double>(w.size()) * ratio));

  Waveform out;
  out.sample_rate = target_rate;
  out.samples.resize(n_out);
  const double pi = std::numbers::pi;
  for (Eigen::Index j = 0; j < n_out; ++j) {
    const double t = static_cast<double>(j) / ratio;
    const auto lo = static_cast<Eigen::Index>(std::ceil(t - half));
    const auto hi = static_cast<Eigen::Index>(std::floor(t + half));
    double acc = 0.0;
    for (Eigen::Index i = std::max<Eigen::Index>(lo, 0); i <= std::min(hi, w.size() - 1); ++i) {
      const double x = (static_cast<double>(i) - t) * cutoff;
      const double sinc = x == 0.0 ? 1.0 : std::sin(pi * x) / (pi * x);
      const double u = (static_cast<double>(i) - t) / half;  // in [-1, 1]
      const double win = 0.42 + 0.5 * std::cos(pi * u) + 0.08 * std::cos(2.0 * pi * u);
      acc += w.samples[i] * cutoff * sinc * win;
    }
    out.samples[j] = acc;
  }
  return out;
}

}  // namespace kse
