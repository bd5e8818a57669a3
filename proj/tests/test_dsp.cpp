#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "kse/dsp.hpp"
#include "kse/io.hpp"
#include "kse/resample.hpp"
#include "kse/synth.hpp"
#include "kse/wav.hpp"

using kse::Spectrogram;
using kse::StftConfig;
using kse::Waveform;
using kse::Window;

namespace {

Waveform noise_wave(Eigen::Index n, std::uint64_t seed, double rate = 16000.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 0.3);
  Waveform w;
  w.sample_rate = rate;
  w.samples.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) w.samples[i] = normal(rng);
  return w;
}

Waveform sign_wave(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Waveform w;
  w.samples.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) w.samples[i] = (rng() & 1) ? 1.0 : -1.0;
  return w;
}

Spectrogram filled(Eigen::Index frames, Eigen::Index bins, std::complex<double> v) {
  Spectrogram s;
  s.config.frame_len = 2 * (bins - 1);
  s.config.hop = s.config.frame_len / 2;
  s.frames = Eigen::MatrixXcd::Constant(frames, bins, v);
  return s;
}

std::filesystem::path temp_path(const std::string& name) {
  return std::filesystem::temp_directory_path() / ("kse_test_" + name);
}

}  // namespace

TEST_CASE("stft config: overlap-add validation") {
  CHECK_NOTHROW(kse::validate(StftConfig{512, 256, Window::sqrt_hann}));
  CHECK_NOTHROW(kse::validate(StftConfig{512, 128, Window::hann}));
  CHECK_NOTHROW(kse::validate(StftConfig{64, 64, Window::rectangular}));
  CHECK_THROWS_AS(kse::validate(StftConfig{512, 256, Window::hann}), kse::ConfigError);
  CHECK_THROWS_AS(kse::validate(StftConfig{500, 250, Window::sqrt_hann}), kse::ConfigError);
  CHECK_THROWS_AS(kse::validate(StftConfig{512, 200, Window::sqrt_hann}), kse::ConfigError);
  CHECK_THROWS_AS(kse::validate(StftConfig{512, 0, Window::sqrt_hann}), kse::ConfigError);
  CHECK(kse::window_from_string("sqrt_hann") == Window::sqrt_hann);
  CHECK_THROWS_AS(kse::window_from_string("kaiser"), kse::ConfigError);
}

TEST_CASE("stft: matches a direct DFT of each windowed frame") {
  const Waveform w = noise_wave(700, 1);
  const StftConfig cfg{64, 32, Window::sqrt_hann};
  const Spectrogram s = kse::stft(w, cfg);
  CHECK(s.n_bins() == 33);
  const Eigen::VectorXd win = kse::make_window(cfg.window, 64);
  const Eigen::Index pad = 32;
  for (Eigen::Index f = 0; f < s.n_frames(); ++f) {
    for (Eigen::Index k = 0; k < s.n_bins(); ++k) {
      std::complex<double> acc = 0.0;
      for (Eigen::Index i = 0; i < 64; ++i) {
        const Eigen::Index t = f * 32 + i - pad;
        const double x = (t >= 0 && t < w.size()) ? w.samples[t] : 0.0;
        acc += x * win[i] * std::polar(1.0, -2.0 * std::numbers::pi * double(k * i) / 64.0);
      }
      CHECK(std::abs(acc - s.frames(f, k)) <= 1e-10);
    }
  }
  // Last frame must reach the last sample.
  CHECK((s.n_frames() - 1) * 32 + 64 - pad >= w.size());
}

TEST_CASE("stft: exact-bin sine is concentrated in its bin") {
  const Eigen::Index N = 64;
  Waveform w;
  w.samples.resize(N * 8);
  for (Eigen::Index t = 0; t < w.size(); ++t) {
    w.samples[t] = std::sin(2.0 * std::numbers::pi * 5.0 * double(t) / double(N));
  }
  const Spectrogram s = kse::stft(w, StftConfig{N, N, Window::rectangular});
  for (Eigen::Index f = 0; f < s.n_frames(); ++f) {
    const double total = s.frames.row(f).cwiseAbs2().sum();
    CHECK(s.frames.row(f).cwiseAbs2()(5) >= 0.99 * total);
  }
}

TEST_CASE("stft/istft: zeros, roundtrip, linearity") {
  Waveform zero;
  zero.samples = Eigen::VectorXd::Zero(2000);
  const Spectrogram z = kse::stft(zero);
  CHECK(z.frames.isZero(0.0));
  CHECK(kse::istft(z).samples.isZero(0.0));

  for (const StftConfig& cfg : {StftConfig{512, 256, Window::sqrt_hann},
                                StftConfig{256, 64, Window::hann},
                                StftConfig{128, 64, Window::rectangular}}) {
    for (Eigen::Index len : {512, 1000, 16000, 16001}) {
      const Waveform w = noise_wave(len, 7 + len);
      const Waveform r = kse::istft(kse::stft(w, cfg));
      REQUIRE(r.size() == w.size());
      CHECK((r.samples - w.samples).cwiseAbs().maxCoeff() <= 1e-6);
      CHECK(r.sample_rate == w.sample_rate);
    }
  }

  const Waveform w = noise_wave(4000, 3);
  Spectrogram s = kse::stft(w);
  const Waveform a = kse::istft(s);
  s.frames *= 2.0;
  const Waveform b = kse::istft(s);
  CHECK((b.samples - 2.0 * a.samples).cwiseAbs().maxCoeff() <= 1e-12);

  CHECK_THROWS_AS(kse::stft(noise_wave(100, 1)), kse::DataError);
}

TEST_CASE("active power: silence is ignored") {
  Waveform w;
  w.samples = Eigen::VectorXd::Zero(16000);
  w.samples.segment(512, 5120).setConstant(0.5);  // exactly ten 32 ms frames
  CHECK(kse::active_power(w) == doctest::Approx(0.25).epsilon(1e-15));
  w.samples.setZero();
  CHECK(kse::active_power(w) == 0.0);
}

TEST_CASE("mix_at_snr: closed forms and exact SNR") {
  const Waveform speech = sign_wave(16000, 1);
  const Waveform noise = sign_wave(20000, 2);
  CHECK(kse::mix_at_snr(speech, noise, 0.0, 5).scale == 1.0);
  CHECK(kse::mix_at_snr(speech, noise, 5.0, 5).scale == doctest::Approx(0.5623413251903491).epsilon(1e-14));

  const Waveform s2 = kse::synth_speech(1.5, 16000.0, 4);
  const Waveform n2 = kse::synth_noise("ssn", 2.5, 16000.0, 5);
  for (double snr : {-5.0, 0.0, 5.0, 17.3}) {
    const kse::Mixture m = kse::mix_at_snr(s2, n2, snr, 11);
    // Independent recomputation: 512-sample frames over 1% of the peak.
    std::vector<double> e;
    for (Eigen::Index i = 0; i < s2.size(); i += 512) {
      e.push_back(s2.samples.segment(i, std::min<Eigen::Index>(512, s2.size() - i)).squaredNorm());
    }
    const double peak = *std::max_element(e.begin(), e.end());
    double sum = 0.0, count = 0.0;
    for (std::size_t i = 0; i < e.size(); ++i) {
      if (e[i] > 0.01 * peak) {
        sum += e[i];
        count += double(std::min<Eigen::Index>(512, s2.size() - Eigen::Index(i) * 512));
      }
    }
    const double pn = m.noise.samples.squaredNorm() / double(m.noise.size());
    CHECK(std::abs(10.0 * std::log10((sum / count) / pn) - snr) <= 1e-6);
    CHECK(m.noisy.samples == s2.samples + m.noise.samples);
    CHECK(m.noise.size() == s2.size());
    for (Eigen::Index t = 0; t < s2.size(); t += 997) {
      CHECK(m.noise.samples[t] == m.scale * n2.samples[m.offset + t]);
    }
  }

  // Short noise wraps around.
  const Waveform short_noise = sign_wave(3000, 9);
  const kse::Mixture m = kse::mix_at_snr(speech, short_noise, 0.0, 2);
  for (Eigen::Index t = 0; t < speech.size(); t += 101) {
    CHECK(m.noise.samples[t] == m.scale * short_noise.samples[(m.offset + t) % 3000]);
  }

  Waveform silent;
  silent.samples = Eigen::VectorXd::Zero(1000);
  CHECK_THROWS_AS(kse::mix_at_snr(silent, noise, 0.0, 1), kse::DataError);
  Waveform other = noise;
  other.sample_rate = 8000.0;
  CHECK_THROWS_AS(kse::mix_at_snr(speech, other, 0.0, 1), kse::DataError);
}

TEST_CASE("irm: closed forms and range") {
  const Spectrogram a = filled(3, 5, {1.0, 1.0});
  const Spectrogram b = filled(3, 5, {0.0, std::sqrt(2.0)});
  CHECK((kse::compute_irm(a, b).array() == std::sqrt(0.5)).all());
  const Spectrogram zero = filled(3, 5, 0.0);
  CHECK((kse::compute_irm(a, zero).array() == 1.0).all());
  CHECK((kse::compute_irm(zero, zero).array() == 0.0).all());
  CHECK_THROWS_AS(kse::compute_irm(a, filled(4, 5, 1.0)), kse::DataError);

  const Spectrogram s = kse::stft(noise_wave(3000, 1));
  Spectrogram n = kse::stft(noise_wave(3000, 2));
  n.frames.col(3).setZero();
  const Eigen::MatrixXd m = kse::compute_irm(s, n, 0.5);
  CHECK((m.array() >= 0.0).all());
  CHECK((m.array() <= 1.0).all());
  const Eigen::MatrixXd sum = kse::compute_irm(s, n, 1.0) + kse::compute_irm(n, s, 1.0);
  CHECK((sum.array() - 1.0).abs().maxCoeff() <= 1e-15);
}

TEST_CASE("ibm: local criterion convention") {
  const Spectrogram ten = filled(2, 3, std::sqrt(10.0));
  const Spectrogram one = filled(2, 3, 1.0);
  const Spectrogram zero = filled(2, 3, 0.0);
  CHECK((kse::compute_ibm(ten, one, 0.0).array() == 1.0).all());
  CHECK((kse::compute_ibm(one, one, 0.0).array() == 0.0).all());
  CHECK((kse::compute_ibm(one, one, -0.1).array() == 1.0).all());
  CHECK((kse::compute_ibm(one, zero, 40.0).array() == 1.0).all());
  CHECK((kse::compute_ibm(zero, one, -40.0).array() == 0.0).all());
  CHECK((kse::compute_ibm(zero, zero, -40.0).array() == 0.0).all());
  CHECK_THROWS_AS(kse::compute_ibm(one, one, -INFINITY), kse::ConfigError);
  const Eigen::MatrixXd m = kse::compute_ibm(kse::stft(noise_wave(3000, 1)), kse::stft(noise_wave(3000, 2)), -5.0);
  CHECK(((m.array() == 0.0) || (m.array() == 1.0)).all());
}

TEST_CASE("features: layout, context replication, standardization") {
  const Spectrogram s = kse::stft(noise_wave(5000, 4));
  const kse::FeatureMatrix f0 = kse::extract_features(s, 0);
  CHECK(f0.cols() == s.n_bins());
  CHECK(f0(3, 7) == doctest::Approx(std::log(std::norm(s.frames(3, 7)) + 1e-10)));
  const kse::FeatureMatrix f2 = kse::extract_features(s, 2);
  const Eigen::Index B = s.n_bins();
  CHECK(f2.cols() == 5 * B);
  CHECK(f2.block(0, 0, 1, B) == f0.row(0));       // t-2 clamps to 0
  CHECK(f2.block(0, B, 1, B) == f0.row(0));
  CHECK(f2.block(4, 0, 1, B) == f0.row(2));
  CHECK(f2.block(4, 2 * B, 1, B) == f0.row(4));
  CHECK(f2.block(4, 4 * B, 1, B) == f0.row(6));
  const Eigen::Index T = s.n_frames();
  CHECK(f2.block(T - 1, 4 * B, 1, B) == f0.row(T - 1));
  CHECK_THROWS_AS(kse::extract_features(s, -1), kse::ConfigError);

  const kse::Standardizer st = kse::Standardizer::fit(f2);
  const kse::FeatureMatrix z = st.apply(f2);
  const double n = double(z.rows());
  for (Eigen::Index j = 0; j < z.cols(); ++j) {
    const double mu = z.col(j).mean();
    const double var = (z.col(j).array() - mu).square().sum() / n;
    CHECK(std::abs(mu) <= 1e-6);
    CHECK(std::abs(var - 1.0) <= 1e-6);
  }

  const Spectrogram c = filled(6, 9, {0.3, 0.4});
  const kse::FeatureMatrix fc = kse::extract_features(c, 1);
  CHECK((fc.array() == fc(0, 0)).all());
  const kse::FeatureMatrix zc = kse::Standardizer::fit(fc).apply(fc);
  CHECK(zc.isZero(0.0));
  CHECK_THROWS_AS(st.apply(fc), kse::DataError);
}

TEST_CASE("apply_mask: identity, silence, oracle bound") {
  const Waveform clean = kse::synth_speech(1.0, 16000.0, 3);
  const kse::Mixture m = kse::mix_at_snr(clean, kse::synth_noise("white", 2.0, 16000.0, 4), 0.0, 1);
  const Spectrogram noisy = kse::stft(m.noisy);
  const Spectrogram ones = kse::apply_mask(noisy, Eigen::MatrixXd::Ones(noisy.n_frames(), noisy.n_bins()));
  CHECK(ones.frames == noisy.frames);
  const Spectrogram zeros = kse::apply_mask(noisy, Eigen::MatrixXd::Zero(noisy.n_frames(), noisy.n_bins()));
  CHECK(kse::istft(zeros).samples.isZero(0.0));
  const Eigen::MatrixXd irm = kse::compute_irm(kse::stft(clean), kse::stft(m.noise));
  const Spectrogram est = kse::apply_mask(noisy, irm);
  CHECK((est.frames.cwiseAbs().array() <= noisy.frames.cwiseAbs().array()).all());
  for (Eigen::Index f = 0; f < irm.rows(); ++f) {
    for (Eigen::Index k = 0; k < irm.cols(); ++k) {
      if (irm(f, k) > 0.0 && std::abs(noisy.frames(f, k)) > 0.0) {
        REQUIRE(std::abs(std::arg(est.frames(f, k)) - std::arg(noisy.frames(f, k))) <= 1e-12);
      }
    }
  }
  CHECK_THROWS_AS(kse::apply_mask(noisy, Eigen::MatrixXd::Ones(3, 3)), kse::DataError);
}

TEST_CASE("synth: determinism, counts, spectral tilt") {
  kse::CorpusConfig cfg;
  cfg.utterances = 20;
  cfg.duration_s = 1.0;
  cfg.noises = {"white", "ssn", "babble", "banded"};
  const auto a = kse::synth_corpus(cfg);
  const auto b = kse::synth_corpus(cfg);
  REQUIRE(a.size() == 20);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].clean.samples == b[i].clean.samples);
    CHECK(a[i].noises.size() == 4);
    for (const auto& [k, v] : a[i].noises) CHECK(v.samples == b[i].noises.at(k).samples);
  }
  // Utterance i depends only on seed + i.
  kse::CorpusConfig shifted = cfg;
  shifted.seed = cfg.seed + 3;
  shifted.utterances = 2;
  CHECK(kse::synth_corpus(shifted)[0].clean.samples == a[3].clean.samples);
  CHECK(a[0].clean.samples != a[1].clean.samples);

  Eigen::FFT<double> fft;
  for (const auto& item : a) {
    const Eigen::VectorXd& x = item.clean.samples;
    CHECK(x.cwiseAbs().maxCoeff() <= 1.0);
    std::vector<double> in(x.data(), x.data() + x.size());
    std::vector<std::complex<double>> X;
    fft.fwd(X, in);
    double low = 0.0, total = 0.0;
    for (std::size_t k = 0; k < X.size(); ++k) {
      const double f = double(std::min(k, X.size() - k)) * 16000.0 / double(X.size());
      total += std::norm(X[k]);
      if (f < 4000.0) low += std::norm(X[k]);
    }
    CHECK(low >= 0.9 * total);
  }

  kse::CorpusConfig bad = cfg;
  bad.noises = {"pink"};
  CHECK_THROWS_AS(kse::synth_corpus(bad), kse::ConfigError);
  bad = cfg;
  bad.utterances = 0;
  CHECK_THROWS_AS(kse::synth_corpus(bad), kse::ConfigError);
}

TEST_CASE("banded noise: band levels differ") {
  const Waveform n = kse::synth_noise("banded", 3.0, 16000.0, 2);
  const Spectrogram s = kse::stft(n);
  Eigen::Vector4d power;
  const Eigen::Index B = s.n_bins() - 1;
  for (int q = 0; q < 4; ++q) power[q] = s.frames.middleCols(q * B / 4, B / 4).cwiseAbs2().mean();
  CHECK(power.maxCoeff() > 4.0 * power.minCoeff());
}

TEST_CASE("wav: roundtrip and rejection") {
  const Waveform w = noise_wave(1234, 3, 22050.0);
  const auto f32 = temp_path("f32.wav").string();
  kse::write_wav(f32, w, kse::WavFormat::float32);
  const Waveform r = kse::read_wav(f32);
  CHECK(r.sample_rate == 22050.0);
  REQUIRE(r.size() == w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) CHECK(r.samples[i] == double(float(w.samples[i])));

  const auto p16 = temp_path("p16.wav").string();
  Waveform clip = w;
  clip.samples[0] = 3.0;
  kse::write_wav(p16, clip, kse::WavFormat::pcm16);
  const Waveform r16 = kse::read_wav(p16);
  CHECK(r16.samples[0] == doctest::Approx(32767.0 / 32768.0));
  CHECK((r16.samples.tail(1000) - w.samples.tail(1000).cwiseMax(-1.0).cwiseMin(1.0)).cwiseAbs().maxCoeff() <= 1.0 / 32768.0);

  // Same file relabelled as stereo.
  std::string bytes = kse::read_file(p16);
  bytes[22] = 2;
  const auto stereo = temp_path("stereo.wav").string();
  kse::write_file_atomic(stereo, bytes);
  CHECK_THROWS_AS(kse::read_wav(stereo), kse::DataError);
  kse::write_file_atomic(stereo, "not a wav file");
  CHECK_THROWS_AS(kse::read_wav(stereo), kse::DataError);
  CHECK_THROWS_AS(kse::read_wav(temp_path("missing.wav").string()), kse::IoError);
}

TEST_CASE("resample: sine survives a rate change") {
  Waveform w;
  w.sample_rate = 16000.0;
  w.samples.resize(16000);
  for (Eigen::Index t = 0; t < w.size(); ++t) w.samples[t] = std::sin(2.0 * std::numbers::pi * 440.0 * double(t) / 16000.0);
  CHECK(kse::resample(w, 16000.0).samples == w.samples);
  for (double rate : {8000.0, 10000.0, 22050.0}) {
    const Waveform r = kse::resample(w, rate);
    CHECK(r.sample_rate == rate);
    CHECK(r.size() == Eigen::Index(std::floor(16000.0 * rate / 16000.0)));
    double err = 0.0;
    for (Eigen::Index j = r.size() / 10; j < r.size() * 9 / 10; ++j) {
      err = std::max(err, std::abs(r.samples[j] - std::sin(2.0 * std::numbers::pi * 440.0 * double(j) / rate)));
    }
    CHECK(err <= 2e-3);
  }
  CHECK_THROWS_AS(kse::resample(w, 0.0), kse::ConfigError);
}
