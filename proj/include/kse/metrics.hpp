#pragma once

#include <Eigen/Dense>

#include <optional>
#include <string>

#include "kse/dsp.hpp"

namespace kse {

double mse(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

/// Column-wise mean squared error.
Eigen::VectorXd mse_per_channel(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

/// Fraction of equal entries; both inputs must be 0/1.
double accuracy(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& target);

/// Short-time objective intelligibility (Taal et al.): 10 kHz, 256-sample
/// frames with 50% overlap, 512-point FFT, 15 third-octave bands from 150 Hz,
/// 30-frame segments, -15 dB clipping, 40 dB silence range. Clamped to [0, 1].
double stoi(const Waveform& clean, const Waveform& processed);

struct EvalReport {
  std::string utterance;
  std::string noise;
  double snr_db = 0.0;
  std::string model_id;
  double mse = 0.0;
  Eigen::VectorXd mse_per_channel;
  std::optional<double> accuracy;
  double stoi_noisy = 0.0;
  double stoi_enhanced = 0.0;
  Eigen::Index frames = 0;
};

}  // namespace kse
