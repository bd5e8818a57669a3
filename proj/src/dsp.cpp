#include "kse/dsp.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>
#include <vector>

namespace kse {

namespace {

bool is_power_of_two(Eigen::Index n) { return n > 0 && (n & (n - 1)) == 0; }

void require_aligned(const Spectrogram& a, const Spectrogram& b, const char* what) {
  if (a.n_frames() != b.n_frames() || a.n_bins() != b.n_bins()) {
    throw DataError(std::string(what) + ": spectrogram shapes differ (" +
                    std::to_string(a.n_frames()) + "x" + std::to_string(a.n_bins()) + " vs " +
                    std::to_string(b.n_frames()) + "x" + std::to_string(b.n_bins()) + ")");
  }
}

}  // namespace

const char* to_string(Window w) {
  switch (w) {
    case Window::rectangular: return "rectangular";
    case Window::hann: return "hann";
    case Window::sqrt_hann: return "sqrt_hann";
  }
  return "?";
}

Window window_from_string(const std::string& name) {
  if (name == "rectangular") return Window::rectangular;
  if (name == "hann") return Window::hann;
  if (name == "sqrt_hann") return Window::sqrt_hann;
  throw ConfigError("unknown window '" + name + "'");
}

Eigen::VectorXd make_window(Window w, Eigen::Index n) {
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                          static_cast<double>(n));
    switch (w) {
      case Window::rectangular: out[i] = 1.0; break;
      case Window::hann: out[i] = h; break;
      case Window::sqrt_hann: out[i] = std::sqrt(h); break;
    }
  }
  return out;
}

void validate(const StftConfig& cfg) {
  if (!is_power_of_two(cfg.frame_len) || cfg.frame_len < 2) {
    throw ConfigError("frame_len must be a power of two >= 2, got " + std::to_string(cfg.frame_len));
  }
  if (cfg.hop < 1 || cfg.hop > cfg.frame_len || cfg.frame_len % cfg.hop != 0) {
    throw ConfigError("hop " + std::to_string(cfg.hop) + " must divide frame_len " +
                      std::to_string(cfg.frame_len));
  }
  const Eigen::VectorXd w2 = make_window(cfg.window, cfg.frame_len).array().square();
  double lo = INFINITY, hi = 0.0;
  for (Eigen::Index n = 0; n < cfg.hop; ++n) {
    double s = 0.0;
    for (Eigen::Index k = n; k < cfg.frame_len; k += cfg.hop) s += w2[k];
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  if (!(lo > 0.0) || hi - lo > 1e-9 * hi) {
    throw ConfigError(std::string("window ") + to_string(cfg.window) + " with hop " +
                      std::to_string(cfg.hop) + "/" + std::to_string(cfg.frame_len) +
                      " does not overlap-add to a constant");
  }
}

Spectrogram stft(const Waveform& w, const StftConfig& cfg) {
  validate(cfg);
  const Eigen::Index N = cfg.frame_len;
  const Eigen::Index L = w.size();
  if (L < N) {
    throw DataError("signal of " + std::to_string(L) + " samples is shorter than one frame (" +
                    std::to_string(N) + ")");
  }
  const Eigen::Index pad = N - cfg.hop;
  const Eigen::Index frames = (pad + L - 1) / cfg.hop + 1;
  Eigen::VectorXd padded = Eigen::VectorXd::Zero((frames - 1) * cfg.hop + N);
  padded.segment(pad, L) = w.samples;
  const Eigen::VectorXd win = make_window(cfg.window, N);

  Spectrogram s;
  s.config = cfg;
  s.sample_rate = w.sample_rate;
  s.length = L;
  s.frames.resize(frames, cfg.bins());
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<double> buf(static_cast<std::size_t>(N));
  std::vector<std::complex<double>> spec;
  for (Eigen::Index f = 0; f < frames; ++f) {
    for (Eigen::Index i = 0; i < N; ++i) buf[static_cast<std::size_t>(i)] = padded[f * cfg.hop + i] * win[i];
    fft.fwd(spec, buf);
    for (Eigen::Index b = 0; b < s.n_bins(); ++b) s.frames(f, b) = spec[static_cast<std::size_t>(b)];
  }
  return s;
}

Waveform istft(const Spectrogram& s) {
  const StftConfig& cfg = s.config;
  validate(cfg);
  const Eigen::Index N = cfg.frame_len;
  if (s.n_bins() != cfg.bins()) {
    throw DataError("istft: " + std::to_string(s.n_bins()) + " bins, expected " +
                    std::to_string(cfg.bins()));
  }
  const Eigen::Index pad = N - cfg.hop;
  const Eigen::Index total = (s.n_frames() - 1) * cfg.hop + N;
  if (s.n_frames() < 1 || s.length < 0 || pad + s.length > total) {
    throw DataError("istft: recorded length inconsistent with frame count");
  }
  const Eigen::VectorXd win = make_window(cfg.window, N);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(total);
  Eigen::VectorXd norm = Eigen::VectorXd::Zero(total);
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> spec(static_cast<std::size_t>(s.n_bins()));
  std::vector<double> buf;
  for (Eigen::Index f = 0; f < s.n_frames(); ++f) {
    for (Eigen::Index b = 0; b < s.n_bins(); ++b) spec[static_cast<std::size_t>(b)] = s.frames(f, b);
    fft.inv(buf, spec, N);
    for (Eigen::Index i = 0; i < N; ++i) {
      acc[f * cfg.hop + i] += buf[static_cast<std::size_t>(i)] * win[i];
      norm[f * cfg.hop + i] += win[i] * win[i];
    }
  }
  Waveform out;
  out.sample_rate = s.sample_rate;
  out.samples.resize(s.length);
  for (Eigen::Index t = 0; t < s.length; ++t) {
    const double z = norm[pad + t];
    out.samples[t] = z > 1e-12 ? acc[pad + t] / z : 0.0;
  }
  return out;
}

double active_power(const Waveform& w) {
  const auto frame = std::max<Eigen::Index>(1, std::lround(0.032 * w.sample_rate));
  std::vector<double> energy;
  for (Eigen::Index s = 0; s < w.size(); s += frame) {
    energy.push_back(w.samples.segment(s, std::min(frame, w.size() - s)).squaredNorm());
  }
  double peak = 0.0;
  for (double e : energy) peak = std::max(peak, e);
  if (!(peak > 0.0)) return 0.0;
  double sum = 0.0;
  Eigen::Index count = 0;
  for (std::size_t i = 0; i < energy.size(); ++i) {
    if (energy[i] > 0.01 * peak) {
      sum += energy[i];
      const Eigen::Index s = static_cast<Eigen::Index>(i) * frame;
      count += std::min(frame, w.size() - s);
    }
  }
  return sum / static_cast<double>(count);
}

Mixture mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db,
                   std::uint64_t seed) {
  if (speech.sample_rate != noise.sample_rate) {
    throw DataError("mix: sample rates differ (" + std::to_string(speech.sample_rate) + " vs " +
                    std::to_string(noise.sample_rate) + ")");
  }
  if (!std::isfinite(snr_db)) throw ConfigError("mix: snr must be finite");
  if (speech.size() == 0 || noise.size() == 0) throw DataError("mix: empty signal");
  const double ps = active_power(speech);
  if (!(ps > 0.0)) throw DataError("mix: speech is silent");

  const Eigen::Index L = speech.size();
  std::mt19937_64 rng(seed);
  Mixture m;
  if (noise.size() >= L) {
    m.offset = std::uniform_int_distribution<Eigen::Index>(0, noise.size() - L)(rng);
  } else {
    m.offset = std::uniform_int_distribution<Eigen::Index>(0, noise.size() - 1)(rng);
  }
  Eigen::VectorXd seg(L);
  for (Eigen::Index t = 0; t < L; ++t) seg[t] = noise.samples[(m.offset + t) % noise.size()];
  const double pn = seg.squaredNorm() / static_cast<double>(L);
  if (!(pn > 0.0)) throw DataError("mix: noise segment is silent");

  m.scale = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  m.noise.sample_rate = speech.sample_rate;
  m.noise.samples = m.scale * seg;
  m.noisy.sample_rate = speech.sample_rate;
  m.noisy.samples = speech.samples + m.noise.samples;
  return m;
}

Eigen::MatrixXd compute_irm(const Spectrogram& speech, const Spectrogram& noise, double beta) {
  require_aligned(speech, noise, "irm");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw ConfigError("irm: beta must be positive");
  const Eigen::ArrayXXd s = speech.frames.cwiseAbs2().array();
  const Eigen::ArrayXXd n = noise.frames.cwiseAbs2().array();
  const Eigen::ArrayXXd total = s + n;
  Eigen::MatrixXd out(s.rows(), s.cols());
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const double t = total(i, j);
      if (!(t > 0.0)) {
        out(i, j) = 0.0;
      } else {
        const double r = s(i, j) / t;
        out(i, j) = beta == 0.5 ? std::sqrt(r) : beta == 1.0 ? r : std::pow(r, beta);
      }
    }
  }
  return out;
}

Eigen::MatrixXd compute_ibm(const Spectrogram& speech, const Spectrogram& noise, double lc_db) {
  require_aligned(speech, noise, "ibm");
  if (!std::isfinite(lc_db)) throw ConfigError("ibm: local criterion must be finite");
  const Eigen::ArrayXXd s = speech.frames.cwiseAbs2().array();
  const Eigen::ArrayXXd n = noise.frames.cwiseAbs2().array();
  Eigen::MatrixXd out(s.rows(), s.cols());
  for (Eigen::Index j = 0; j < s.cols(); ++j) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      if (!(s(i, j) > 0.0)) {
        out(i, j) = 0.0;
      } else if (!(n(i, j) > 0.0)) {
        out(i, j) = 1.0;
      } else {
        out(i, j) = 10.0 * std::log10(s(i, j) / n(i, j)) > lc_db ? 1.0 : 0.0;
      }
    }
  }
  return out;
}

FeatureMatrix extract_features(const Spectrogram& noisy, Eigen::Index context) {
  if (context < 0) throw ConfigError("context must be >= 0");
  const Eigen::Index T = noisy.n_frames();
  const Eigen::Index B = noisy.n_bins();
  if (T == 0 || B == 0) throw DataError("extract_features: empty spectrogram");
  const Eigen::MatrixXd logp = (noisy.frames.cwiseAbs2().array() + kLogFloor).log().matrix();
  const Eigen::Index width = 2 * context + 1;
  FeatureMatrix X(T, B * width);
  for (Eigen::Index t = 0; t < T; ++t) {
    for (Eigen::Index k = 0; k < width; ++k) {
      const Eigen::Index src = std::clamp<Eigen::Index>(t + k - context, 0, T - 1);
      X.block(t, k * B, 1, B) = logp.row(src);
    }
  }
  return X;
}

Standardizer Standardizer::fit(const FeatureMatrix& X) {
  if (X.rows() == 0) throw DataError("standardizer: no rows");
  Standardizer s;
  const double n = static_cast<double>(X.rows());
  s.mean = X.colwise().sum() / n;
  s.scale.resize(X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double var = (X.col(j).array() - s.mean[j]).square().sum() / n;
    // Constant columns (up to rounding of the mean) carry no information.
    const double mag = std::max(1.0, std::abs(s.mean[j]));
    s.scale[j] = var > 1e-24 * mag * mag ? 1.0 / std::sqrt(var) : 0.0;
  }
  return s;
}

void Standardizer::apply_inplace(FeatureMatrix& X) const {
  if (X.cols() != mean.size()) {
    throw DataError("standardizer: feature dimension " + std::to_string(X.cols()) + " != fitted " +
                    std::to_string(mean.size()));
  }
  X.rowwise() -= mean;
  X.array().rowwise() *= scale.array();
}

FeatureMatrix Standardizer::apply(const FeatureMatrix& X) const {
  FeatureMatrix out = X;
  apply_inplace(out);
  return out;
}

Spectrogram apply_mask(const Spectrogram& noisy, const Eigen::MatrixXd& mask) {
  if (mask.rows() != noisy.n_frames() || mask.cols() != noisy.n_bins()) {
    throw DataError("apply_mask: mask " + std::to_string(mask.rows()) + "x" +
                    std::to_string(mask.cols()) + " does not match spectrogram " +
                    std::to_string(noisy.n_frames()) + "x" + std::to_string(noisy.n_bins()));
  }
  Spectrogram out = noisy;
  out.frames = noisy.frames.array() * mask.array().cast<std::complex<double>>();
  return out;
}

}  // namespace kse
