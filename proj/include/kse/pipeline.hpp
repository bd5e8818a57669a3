#pragma once

// Corpus loading, utterance-level splits and dataset assembly.

#include <map>
#include <string>
#include <vector>

#include "kse/config.hpp"
#include "kse/dataset.hpp"
#include "kse/dsp.hpp"

namespace kse {

struct Utterance {
  std::string name;
  SplitTag split = SplitTag::train;
  Waveform clean;
  std::map<std::string, Waveform> noises;  // per-utterance noises (synthetic corpora)
};

struct Corpus {
  std::vector<Utterance> utterances;
  std::map<std::string, Waveform> shared_noises;  // one file per noise kind (WAV corpora)

  const Waveform& noise_for(std::size_t utt, const std::string& name) const;
};

/// Seeded shuffle of utterance indices; the first round(train * n) go to
/// train, the next round(val * n) to validation, the rest to test. Every
/// split gets at least one utterance when n >= 3.
std::vector<SplitTag> assign_splits(std::size_t n, double train, double val, std::uint64_t seed);

/// Synthesizes or reads the corpus and tags every utterance with its split.
Corpus load_corpus(const RunConfig& cfg);

struct PreparedMixture {
  Waveform clean;
  Waveform noise;  // scaled noise as mixed
  Waveform noisy;
  Spectrogram noisy_spec;
  FeatureMatrix features;  // not standardized
  Eigen::MatrixXd target;  // frames x bins
};

PreparedMixture prepare_mixture(const RunConfig& cfg, const Corpus& corpus, std::size_t utt,
                                std::size_t setting);

Eigen::MatrixXd ideal_mask(const RunConfig& cfg, const Spectrogram& clean, const Spectrogram& noise,
                           double snr_db);

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
  Standardizer standardizer;    // fitted on every training frame
  Eigen::Index train_frames = 0;  // before capping
  Eigen::Index val_frames = 0;
};

/// Features and targets for every (utterance, noise setting) pair, grouped by
/// split. Training and validation rows are capped by a seeded subsample.
DatasetSplits build_dataset(const RunConfig& cfg, const Corpus& corpus);
DatasetSplits build_dataset(const RunConfig& cfg);

}  // namespace kse
