#include "kse/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <random>

#include "kse/pipeline.hpp"
#include "kse/resample.hpp"
#include "kse/synth.hpp"
#include "kse/wav.hpp"

namespace kse {

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::size_t utt, std::size_t setting) {
  std::uint64_t x = seed ^ (0x9e3779b97f4a7c15ULL * (utt + 1)) ^ (0xc2b2ae3d27d4eb4fULL * (setting + 1));
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Waveform at_rate(Waveform w, double rate, const std::string& what) {
  if (w.sample_rate == rate) return w;
  std::cerr << "warning: resampling " << what << " from " << w.sample_rate << " Hz to " << rate
            << " Hz\n";
  return resample(w, rate);
}

// Seeded subset of `cap` rows, kept in order.
std::vector<Eigen::Index> cap_rows(Eigen::Index n, Eigen::Index cap, std::uint64_t seed) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (n <= cap) return idx;
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(cap));
  std::sort(idx.begin(), idx.end());
  return idx;
}

void cap_dataset(Dataset& d, Eigen::Index cap, std::uint64_t seed) {
  if (d.rows() <= cap) return;
  const auto rows = cap_rows(d.rows(), cap, seed);
  d.X = d.X(rows, Eigen::all).eval();
  d.Y = d.Y(rows, Eigen::all).eval();
  d.segments.clear();  // rows no longer form contiguous runs
}

}  // namespace

const char* to_string(MaskKind kind) {
  return kind == MaskKind::irm ? "irm" : "ibm";
}

const char* to_string(SplitTag tag) {
  switch (tag) {
    case SplitTag::train: return "train";
    case SplitTag::val: return "val";
    default: return "test";
  }
}

const Waveform& Corpus::noise_for(std::size_t utt, const std::string& name) const {
  const auto& own = utterances.at(utt).noises;
  if (auto it = own.find(name); it != own.end()) return it->second;
  if (auto it = shared_noises.find(name); it != shared_noises.end()) return it->second;
  throw DataError("no noise '" + name + "' for utterance " + utterances.at(utt).name);
}

std::vector<SplitTag> assign_splits(std::size_t n, double train, double val, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train * static_cast<double>(n)));
  auto n_val = static_cast<std::size_t>(std::llround(val * static_cast<double>(n)));
  if (n >= 3) {
    n_train = std::clamp<std::size_t>(n_train, 1, n - 2);
    n_val = std::clamp<std::size_t>(n_val, 1, n - 1 - n_train);
  } else {
    n_train = std::min(n_train, n);
    n_val = std::min(n_val, n - n_train);
  }
  std::vector<SplitTag> tags(n, SplitTag::test);
  for (std::size_t i = 0; i < n; ++i) {
    if (i < n_train) {
      tags[order[i]] = SplitTag::train;
    } else if (i < n_train + n_val) {
      tags[order[i]] = SplitTag::val;
    }
  }
  return tags;
}

Corpus load_corpus(const RunConfig& cfg) {
  Corpus corpus;
  if (cfg.corpus.kind == CorpusKind::synthetic) {
    for (auto& item : synth_corpus(cfg.corpus.synthetic)) {
      Utterance u;
      u.name = item.name;
      u.clean = std::move(item.clean);
      u.noises = std::move(item.noises);
      corpus.utterances.push_back(std::move(u));
    }
  } else {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    for (const auto& e : fs::directory_iterator(cfg.corpus.speech_dir)) {
      if (e.is_regular_file() && e.path().extension() == ".wav") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      Utterance u;
      u.name = f.stem().string();
      u.clean = at_rate(read_wav(f.string()), cfg.features.sample_rate, f.string());
      corpus.utterances.push_back(std::move(u));
    }
    for (const auto& s : cfg.noise_settings) {
      if (corpus.shared_noises.count(s.noise)) continue;
      const fs::path p = fs::path(cfg.corpus.noise_dir) / (s.noise + ".wav");
      corpus.shared_noises[s.noise] = at_rate(read_wav(p.string()), cfg.features.sample_rate, p.string());
    }
  }
  if (corpus.utterances.empty()) throw DataError("corpus has no utterances");
  const auto tags = assign_splits(corpus.utterances.size(), cfg.train_fraction, cfg.val_fraction, cfg.seed);
  for (std::size_t i = 0; i < tags.size(); ++i) corpus.utterances[i].split = tags[i];
  return corpus;
}

Eigen::MatrixXd ideal_mask(const RunConfig& cfg, const Spectrogram& clean, const Spectrogram& noise,
                           double snr_db) {
  if (cfg.mask == MaskKind::irm) return compute_irm(clean, noise, cfg.irm_beta);
  return compute_ibm(clean, noise, snr_db + cfg.ibm_offset_db);
}

PreparedMixture prepare_mixture(const RunConfig& cfg, const Corpus& corpus, std::size_t utt,
                                std::size_t setting) {
  const NoiseSetting& ns = cfg.noise_settings.at(setting);
  const Utterance& u = corpus.utterances.at(utt);
  Mixture m = mix_at_snr(u.clean, corpus.noise_for(utt, ns.noise), ns.snr_db,
                         mix_seed(cfg.seed, utt, setting));
  PreparedMixture p;
  p.clean = u.clean;
  p.noise = std::move(m.noise);
  p.noisy = std::move(m.noisy);
  p.noisy_spec = stft(p.noisy, cfg.features.stft);
  p.features = extract_features(p.noisy_spec, cfg.features.context);
  p.target = ideal_mask(cfg, stft(p.clean, cfg.features.stft), stft(p.noise, cfg.features.stft),
                        ns.snr_db);
  return p;
}

DatasetSplits build_dataset(const RunConfig& cfg, const Corpus& corpus) {
  validate(cfg);
  DatasetSplits out;
  const Eigen::Index dim = cfg.features.dim();
  const Eigen::Index bins = cfg.features.bins();

  // Sizes first so each split is allocated once.
  std::map<SplitTag, Eigen::Index> rows;
  Dataset* targets[3] = {&out.train, &out.val, &out.test};
  const SplitTag tags[3] = {SplitTag::train, SplitTag::val, SplitTag::test};
  for (int k = 0; k < 3; ++k) {
    targets[k]->split = tags[k];
    targets[k]->mask = cfg.mask;
  }
  std::vector<std::vector<Eigen::Index>> frames(corpus.utterances.size());
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    const Eigen::Index len = corpus.utterances[u].clean.size();
    if (len < cfg.features.stft.frame_len) {
      throw DataError("utterance " + corpus.utterances[u].name + " is shorter than one frame");
    }
    const Eigen::Index pad = cfg.features.stft.frame_len - cfg.features.stft.hop;
    const Eigen::Index n = (pad + len - 1) / cfg.features.stft.hop + 1;
    rows[corpus.utterances[u].split] += n * static_cast<Eigen::Index>(cfg.noise_settings.size());
  }
  for (int k = 0; k < 3; ++k) {
    targets[k]->X.resize(rows[tags[k]], dim);
    targets[k]->Y.resize(rows[tags[k]], bins);
  }
  std::map<SplitTag, Eigen::Index> filled;
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    const SplitTag tag = corpus.utterances[u].split;
    Dataset& d = *targets[static_cast<int>(tag)];
    for (std::size_t s = 0; s < cfg.noise_settings.size(); ++s) {
      PreparedMixture p = prepare_mixture(cfg, corpus, u, s);
      const Eigen::Index at = filled[tag];
      const Eigen::Index n = p.features.rows();
      d.X.middleRows(at, n) = p.features;
      d.Y.middleRows(at, n) = p.target;
      d.segments.push_back(Segment{corpus.utterances[u].name, cfg.noise_settings[s].noise,
                                   cfg.noise_settings[s].snr_db, at, n});
      filled[tag] += n;
    }
  }
  if (out.train.rows() < 2) throw DataError("training split is empty");
  if (out.val.rows() < 1) throw DataError("validation split is empty");

  out.standardizer = Standardizer::fit(out.train.X);
  for (Dataset* d : targets) out.standardizer.apply_inplace(d->X);
  out.train_frames = out.train.rows();
  out.val_frames = out.val.rows();
  cap_dataset(out.train, cfg.max_train_frames, mix_seed(cfg.seed, 1u << 20, 1));
  cap_dataset(out.val, cfg.max_val_frames, mix_seed(cfg.seed, 1u << 20, 2));
  return out;
}

DatasetSplits build_dataset(const RunConfig& cfg) {
  validate(cfg);
  return build_dataset(cfg, load_corpus(cfg));
}

}  // namespace kse
