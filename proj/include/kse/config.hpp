#pragma once

// Run configuration: JSON on disk, plain structs in memory.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kse/autotune.hpp"
#include "kse/dataset.hpp"
#include "kse/dsp.hpp"
#include "kse/eigenpro.hpp"
#include "kse/synth.hpp"

namespace kse {

struct FeatureParams {
  StftConfig stft;
  Eigen::Index context = 2;
  double sample_rate = 16000.0;

  Eigen::Index bins() const { return stft.bins(); }
  Eigen::Index dim() const { return stft.bins() * (2 * context + 1); }
};

struct NoiseSetting {
  std::string noise;
  double snr_db = 0.0;

  friend bool operator==(const NoiseSetting&, const NoiseSetting&) = default;
};

enum class CorpusKind { synthetic, wav };

struct CorpusSource {
  CorpusKind kind = CorpusKind::synthetic;
  CorpusConfig synthetic;
  std::string speech_dir;  // *.wav, one utterance each
  std::string noise_dir;   // <noise name>.wav
};

struct RunConfig {
  CorpusSource corpus;
  std::vector<NoiseSetting> noise_settings;
  MaskKind mask = MaskKind::irm;
  double irm_beta = 0.5;
  double ibm_offset_db = -5.0;  // local criterion relative to the mixture SNR
  Eigen::Index subbands = 4;
  FeatureParams features;
  SearchSpace search;
  SolverConfig solver;
  Eigen::Index max_train_frames = 8000;
  Eigen::Index max_val_frames = 2000;
  double train_fraction = 0.70;
  double val_fraction = 0.15;
  std::string output_dir = "kse_run";
  std::uint64_t seed = 1;
  int threads = 1;
};

RunConfig default_config();

/// Throws ConfigError on invalid fields and IoError for missing directories.
void validate(const RunConfig& cfg);

std::string to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys are rejected.
RunConfig config_from_json(const std::string& text);
RunConfig load_config(const std::string& path);

/// Command-line overrides applied on top of a loaded config.
struct Overrides {
  std::optional<Eigen::Index> subbands;
  std::optional<std::vector<double>> snrs;  // replaces every setting's SNR grid
  std::optional<std::uint64_t> seed;
  std::optional<MaskKind> mask;
  std::optional<int> threads;
  std::optional<std::string> output_dir;
};

void apply(RunConfig& cfg, const Overrides& o);

MaskKind mask_from_string(const std::string& s);

}  // namespace kse
