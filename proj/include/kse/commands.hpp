#pragma once

// The five CLI commands as library calls. Each writes its files under
// cfg.output_dir; wall-clock timings go to a separate file so reports stay
// byte-for-byte reproducible.

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "kse/config.hpp"
#include "kse/metrics.hpp"
#include "kse/model_file.hpp"
#include "kse/pipeline.hpp"
#include "kse/subband.hpp"

namespace kse {

struct TrainOutcome {
  ModelFile model;
  std::vector<SubbandTuning> tuning;
  std::string model_path;
  std::string report_path;
  std::string timings_path;
  double val_mse = 0.0;
  Eigen::VectorXd val_mse_per_channel;
  Eigen::Index train_rows = 0;
  Eigen::Index val_rows = 0;
};

TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log);

std::vector<SubbandTuning> cmd_autotune(const RunConfig& cfg, std::ostream& log);

/// Writes clean / noise / noisy WAVs for every utterance and noise setting.
/// Returns the number of mixtures written.
std::size_t cmd_mix(const RunConfig& cfg, std::ostream& log);

/// Mask for a noisy spectrogram: predictions clipped to [0, 1], binarized at
/// 0.5 for IBM models.
Eigen::MatrixXd model_mask(const ModelFile& m, const Spectrogram& noisy);

Waveform enhance(const ModelFile& m, const Waveform& noisy, std::ostream& log);

void cmd_enhance(const std::string& model_path, const std::string& wav_in,
                 const std::string& wav_out, std::ostream& log);

struct SettingSummary {
  NoiseSetting setting;
  std::size_t utterances = 0;
  Eigen::Index frames = 0;
  double mse = 0.0;  // frame-weighted
  Eigen::VectorXd mse_per_channel;
  std::optional<double> accuracy;
  double zeros_accuracy = 0.0;  // accuracy of an all-zero mask, IBM only
  double stoi_noisy = 0.0;      // mean over utterances
  double stoi_enhanced = 0.0;
};

struct EvalSummary {
  std::vector<EvalReport> reports;  // one per (utterance, setting)
  std::vector<SettingSummary> settings;
};

/// Soft mask for one prepared mixture.
using MaskFn = std::function<Eigen::MatrixXd(const PreparedMixture&)>;

/// Scores `mask_fn` on every test utterance under every noise setting of cfg.
EvalSummary evaluate(const RunConfig& cfg, const Corpus& corpus, const MaskFn& mask_fn,
                     const std::string& model_id);

/// Writes eval_utterances.txt, eval_summary.txt and channel_mse.tsv.
void write_eval_files(const RunConfig& cfg, const EvalSummary& s, const std::string& dir);

/// Uses the configuration stored in the model unless `cfg` is given.
EvalSummary cmd_evaluate(const std::string& model_path, const std::optional<RunConfig>& cfg,
                         std::ostream& log);

/// Fixed-precision text forms used in every report.
std::string format_number(double v);
std::string format_report_line(const EvalReport& r);

}  // namespace kse
