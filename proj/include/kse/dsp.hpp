#pragma once

// Signal-domain helpers: STFT analysis/synthesis, SNR-controlled mixing,
// ideal masks and frame features.

#include <Eigen/Dense>

#include <cstdint>
#include <string>

#include "kse/error.hpp"
#include "kse/kernel.hpp"

namespace kse {

struct Waveform {
  Eigen::VectorXd samples;
  double sample_rate = 16000.0;

  Eigen::Index size() const { return samples.size(); }
};

enum class Window { rectangular, hann, sqrt_hann };

const char* to_string(Window w);
Window window_from_string(const std::string& name);

/// Periodic window of length n.
Eigen::VectorXd make_window(Window w, Eigen::Index n);

struct StftConfig {
  Eigen::Index frame_len = 512;
  Eigen::Index hop = 256;
  Window window = Window::sqrt_hann;

  Eigen::Index bins() const { return frame_len / 2 + 1; }
};

/// Throws ConfigError unless frame_len is a power of two, hop divides it and
/// the squared window overlap-adds to a constant.
void validate(const StftConfig& cfg);

struct Spectrogram {
  Eigen::MatrixXcd frames;  // n_frames x n_bins
  StftConfig config;
  double sample_rate = 16000.0;
  Eigen::Index length = 0;  // samples of the analysed signal

  Eigen::Index n_frames() const { return frames.rows(); }
  Eigen::Index n_bins() const { return frames.cols(); }
};

/// The signal is zero-padded by frame_len - hop in front and at the back to
/// whole frames, so every sample lies under frame_len / hop frames.
Spectrogram stft(const Waveform& w, const StftConfig& cfg = {});

/// Weighted overlap-add with the analysis window, normalized by the summed
/// squared window. Truncated to the recorded length.
Waveform istft(const Spectrogram& s);

/// Mean power over 32 ms frames whose energy exceeds 1% of the peak frame.
double active_power(const Waveform& w);

struct Mixture {
  Waveform noisy;
  Waveform noise;       // scaled noise segment actually added
  double scale = 1.0;   // applied to the noise
  Eigen::Index offset = 0;
};

/// noisy = speech + scale * noise[offset...], cycling the noise if short, with
/// scale chosen so active_power(speech) / power(noise_used) hits snr_db.
Mixture mix_at_snr(const Waveform& speech, const Waveform& noise, double snr_db,
                   std::uint64_t seed);

/// (|S|^2 / (|S|^2 + |N|^2))^beta; 0 where both vanish.
Eigen::MatrixXd compute_irm(const Spectrogram& speech, const Spectrogram& noise, double beta = 0.5);

/// 1 where 10 log10(|S|^2/|N|^2) > lc_db.
Eigen::MatrixXd compute_ibm(const Spectrogram& speech, const Spectrogram& noise, double lc_db);

inline constexpr double kLogFloor = 1e-10;

/// log(|X|^2 + 1e-10) per bin, stacked with `context` frames either side
/// (boundary frames repeated). Rows are frames.
FeatureMatrix extract_features(const Spectrogram& noisy, Eigen::Index context);

/// Per-dimension standardization fitted on training rows.
struct Standardizer {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd scale;  // 1 / std, 0 for constant dimensions

  static Standardizer fit(const FeatureMatrix& X);
  FeatureMatrix apply(const FeatureMatrix& X) const;
  void apply_inplace(FeatureMatrix& X) const;
  Eigen::Index dim() const { return mean.size(); }
};

/// Per-bin real gain; phase kept.
Spectrogram apply_mask(const Spectrogram& noisy, const Eigen::MatrixXd& mask);

}  // namespace kse
