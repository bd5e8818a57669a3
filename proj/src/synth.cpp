#include "kse/synth.hpp"

#include <unsupported/Eigen/FFT>

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <random>

namespace kse {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) h = (h ^ c) * 1099511628211ULL;
  return h;
}

Eigen::Index samples_for(double duration_s, double sample_rate) {
  return static_cast<Eigen::Index>(std::llround(duration_s * sample_rate));
}

double resonance(double f, double centre, double bw) {
  const double u = (f - centre) / bw;
  return 1.0 / (1.0 + u * u);
}

Eigen::VectorXd gaussian(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  Eigen::VectorXd x(n);
  for (Eigen::Index i = 0; i < n; ++i) x[i] = normal(rng);
  return x;
}

Eigen::VectorXd speech_shape(const Eigen::VectorXd& x) {
  Eigen::VectorXd y(x.size());
  double a = 0.0, b = 0.0, prev = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    a = x[i] + 0.85 * a;
    b = a + 0.85 * b;
    y[i] = b - 0.98 * prev;
    prev = b;
  }
  return y;
}

// Slow positive envelope from a few random low-frequency sinusoids.
Eigen::VectorXd modulation(Eigen::Index n, double sample_rate, double lo_hz, double hi_hz,
                           double depth, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> rate(lo_hz, hi_hz), phase(0.0, kTwoPi);
  double f[3], p[3];
  for (int j = 0; j < 3; ++j) {
    f[j] = rate(rng);
    p[j] = phase(rng);
  }
  Eigen::VectorXd m(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    double v = 1.0;
    for (int j = 0; j < 3; ++j) v += depth * std::sin(kTwoPi * f[j] * t + p[j]) / 3.0;
    m[i] = std::max(0.05, v);
  }
  return m;
}

Eigen::VectorXd normalize_peak(Eigen::VectorXd x, double peak) {
  const double m = x.cwiseAbs().maxCoeff();
  if (m > 0.0) x *= peak / m;
  return x;
}

}  // namespace

const std::vector<std::string>& noise_kinds() {
  static const std::vector<std::string> kinds{"white", "ssn", "babble", "banded"};
  return kinds;
}

void validate(const CorpusConfig& cfg) {
  if (cfg.utterances < 1) throw ConfigError("corpus: utterances must be >= 1");
  if (!(cfg.duration_s > 0.1) || !std::isfinite(cfg.duration_s)) {
    throw ConfigError("corpus: duration_s must exceed 0.1");
  }
  if (!(cfg.sample_rate >= 8000.0) || !std::isfinite(cfg.sample_rate)) {
    throw ConfigError("corpus: sample_rate must be >= 8000");
  }
  if (cfg.noises.empty()) throw ConfigError("corpus: no noise kinds");
  for (const auto& n : cfg.noises) {
    const auto& k = noise_kinds();
    if (std::find(k.begin(), k.end(), n) == k.end()) {
      throw ConfigError("corpus: unknown noise kind '" + n + "'");
    }
  }
}

Waveform synth_speech(double duration_s, double sample_rate, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uni = [&](double a, double b) { return a + (b - a) * u(rng); };

  const Eigen::Index n = samples_for(duration_s, sample_rate);
  Waveform w;
  w.sample_rate = sample_rate;
  w.samples = Eigen::VectorXd::Zero(n);
  const double fmax = std::min(3900.0, 0.45 * sample_rate);
  const double taper = 400.0;
  const double speaker_f0 = uni(100.0, 220.0);

  Eigen::Index pos = samples_for(uni(0.05, 0.2), sample_rate);
  while (pos < n) {
    const Eigen::Index len = std::min(samples_for(uni(0.12, 0.35), sample_rate), n - pos);
    const double f0a = speaker_f0 * uni(0.85, 1.2);
    const double f0b = f0a * uni(0.75, 1.3);
    const double F1 = uni(300.0, 900.0);
    const double F2 = uni(900.0, 2500.0);
    const double F3 = uni(2400.0, 3500.0);
    const double gain = uni(0.4, 1.0);
    const double vib = uni(4.0, 7.0);
    const Eigen::Index ramp = std::max<Eigen::Index>(1, samples_for(0.02, sample_rate));
    std::vector<double> phase(64, 0.0);
    for (Eigen::Index i = 0; i < len; ++i) {
      const double t = static_cast<double>(i) / sample_rate;
      const double frac = static_cast<double>(i) / static_cast<double>(len);
      const double f0 = (f0a + (f0b - f0a) * frac) * (1.0 + 0.01 * std::sin(kTwoPi * vib * t));
      double env = gain;
      if (i < ramp) env *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(i) / ramp);
      if (len - 1 - i < ramp) {
        env *= 0.5 - 0.5 * std::cos(std::numbers::pi * static_cast<double>(len - 1 - i) / ramp);
      }
      double v = 0.0;
      for (std::size_t k = 1; k < phase.size(); ++k) {
        const double f = static_cast<double>(k) * f0;
        if (f >= fmax) break;
        phase[k] += kTwoPi * f / sample_rate;
        double a = std::pow(static_cast<double>(k), -0.7) *
                   (0.2 + resonance(f, F1, 120.0) + 0.7 * resonance(f, F2, 180.0) +
                    0.4 * resonance(f, F3, 250.0));
        if (f > fmax - taper) a *= (fmax - f) / taper;
        v += a * std::sin(phase[k]);
      }
      w.samples[pos + i] = env * v;
    }
    pos += len + samples_for(uni(0.04, 0.2), sample_rate);
  }
  w.samples = normalize_peak(std::move(w.samples), 0.5);
  return w;
}

Waveform synth_noise(const std::string& kind, double duration_s, double sample_rate,
                     std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const Eigen::Index n = samples_for(duration_s, sample_rate);
  if (n < 1) throw ConfigError("noise: duration too short");
  Waveform w;
  w.sample_rate = sample_rate;
  if (kind == "white") {
    w.samples = gaussian(n, rng);
  } else if (kind == "ssn") {
    w.samples = speech_shape(gaussian(n, rng));
  } else if (kind == "babble") {
    const Eigen::VectorXd m = modulation(n, sample_rate, 2.0, 6.0, 2.4, rng);
    w.samples = speech_shape(gaussian(n, rng)).cwiseProduct(m);
  } else if (kind == "banded") {
    const Eigen::VectorXd x = gaussian(n, rng);
    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> X;
    std::vector<double> in(x.data(), x.data() + n), part;
    fft.fwd(X, in);
    const std::size_t bins = X.size();
    const double levels[4] = {1.0, 0.3, 2.0, 0.6};
    const double rates[4] = {0.5, 3.0, 1.0, 6.0};
    w.samples = Eigen::VectorXd::Zero(n);
    for (int q = 0; q < 4; ++q) {
      std::vector<std::complex<double>> Y(bins, 0.0);
      for (std::size_t b = 0; b < bins; ++b) {
        // Frequency of bin b, folded to [0, fs/2].
        const std::size_t fold = std::min(b, bins - b);
        const double f = static_cast<double>(fold) * sample_rate / static_cast<double>(bins);
        const int band = std::min(3, static_cast<int>(4.0 * f / (0.5 * sample_rate)));
        if (band == q) Y[b] = X[b];
      }
      fft.inv(part, Y);
      const Eigen::VectorXd m = modulation(n, sample_rate, 0.5 * rates[q], rates[q], 2.4, rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        w.samples[i] += levels[q] * m[i] * part[static_cast<std::size_t>(i)];
      }
    }
  } else {
    throw ConfigError("unknown noise kind '" + kind + "'");
  }
  w.samples = normalize_peak(std::move(w.samples), 0.5);
  return w;
}

std::vector<CorpusItem> synth_corpus(const CorpusConfig& cfg) {
  validate(cfg);
  std::vector<CorpusItem> out;
  out.reserve(static_cast<std::size_t>(cfg.utterances));
  for (int i = 0; i < cfg.utterances; ++i) {
    const std::uint64_t s = cfg.seed + static_cast<std::uint64_t>(i);
    CorpusItem item;
    char name[32];
    std::snprintf(name, sizeof name, "utt%03d", i);
    item.name = name;
    item.clean = synth_speech(cfg.duration_s, cfg.sample_rate, splitmix(s));
    for (const auto& kind : cfg.noises) {
      item.noises[kind] =
          synth_noise(kind, cfg.duration_s + 1.0, cfg.sample_rate, splitmix(s ^ name_hash(kind)));
    }
    out.push_back(std::move(item));
  }
  return out;
}

}  // namespace kse
