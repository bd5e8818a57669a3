#include "kse/config.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "kse/io.hpp"

namespace kse {

using nlohmann::json;

namespace {

const char* to_string(BandwidthScale s) {
  return s == BandwidthScale::linear ? "linear" : "log2_relative";
}

BandwidthScale scale_from_string(const std::string& s) {
  if (s == "linear") return BandwidthScale::linear;
  if (s == "log2_relative") return BandwidthScale::log2_relative;
  throw ConfigError("unknown bandwidth scale '" + s + "'");
}

// Reads optional keys from one JSON object and rejects the rest.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  ~Reader() noexcept(false) {
    if (std::uncaught_exceptions() > 0) return;
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
    }
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where_ + "." + key + ": " + e.what());
    }
  }

  const json* sub(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

}  // namespace

MaskKind mask_from_string(const std::string& s) {
  if (s == "irm") return MaskKind::irm;
  if (s == "ibm") return MaskKind::ibm;
  throw ConfigError("unknown mask kind '" + s + "' (expected irm or ibm)");
}

RunConfig default_config() {
  RunConfig cfg;
  for (const char* n : {"white", "ssn"}) {
    for (double snr : {-5.0, 0.0, 5.0}) cfg.noise_settings.push_back({n, snr});
  }
  cfg.search.scale = BandwidthScale::log2_relative;
  cfg.search.sigma_lo = -16.0;
  cfg.search.sigma_hi = 16.0;
  cfg.search.subsample_train = 1500;
  cfg.search.subsample_val = 750;
  return cfg;
}

void validate(const RunConfig& cfg) {
  if (cfg.noise_settings.empty()) throw ConfigError("at least one noise setting is required");
  for (const auto& s : cfg.noise_settings) {
    if (!std::isfinite(s.snr_db)) throw ConfigError("noise setting '" + s.noise + "': SNR must be finite");
  }
  if (cfg.corpus.kind == CorpusKind::synthetic) {
    validate(cfg.corpus.synthetic);
    const auto& have = cfg.corpus.synthetic.noises;
    for (const auto& s : cfg.noise_settings) {
      if (std::find(have.begin(), have.end(), s.noise) == have.end()) {
        throw ConfigError("noise setting uses '" + s.noise + "', which the corpus does not generate");
      }
    }
    if (cfg.corpus.synthetic.sample_rate != cfg.features.sample_rate) {
      throw ConfigError("corpus sample_rate differs from features.sample_rate");
    }
  } else {
    namespace fs = std::filesystem;
    if (!fs::is_directory(cfg.corpus.speech_dir)) {
      throw IoError("speech_dir '" + cfg.corpus.speech_dir + "' is not a directory");
    }
    for (const auto& s : cfg.noise_settings) {
      const fs::path p = fs::path(cfg.corpus.noise_dir) / (s.noise + ".wav");
      if (!fs::is_regular_file(p)) throw IoError("noise file '" + p.string() + "' not found");
    }
  }
  validate(cfg.features.stft);
  if (cfg.features.context < 0) throw ConfigError("features.context must be >= 0");
  if (!(cfg.features.sample_rate > 0.0)) throw ConfigError("features.sample_rate must be positive");
  if (cfg.subbands < 1 || cfg.subbands > cfg.features.bins()) {
    throw ConfigError("subbands must lie in [1, " + std::to_string(cfg.features.bins()) + "]");
  }
  if (!(cfg.irm_beta > 0.0)) throw ConfigError("irm_beta must be positive");
  if (!std::isfinite(cfg.ibm_offset_db)) throw ConfigError("ibm_offset_db must be finite");
  validate(cfg.search);
  validate(cfg.solver);
  if (cfg.max_train_frames < 2 || cfg.max_val_frames < 1) {
    throw ConfigError("frame caps must be positive");
  }
  if (!(cfg.train_fraction > 0.0 && cfg.val_fraction > 0.0 &&
        cfg.train_fraction + cfg.val_fraction < 1.0)) {
    throw ConfigError("split fractions must be positive and leave room for a test split");
  }
  if (cfg.threads < 1) throw ConfigError("threads must be >= 1");
  if (cfg.output_dir.empty()) throw ConfigError("output_dir must not be empty");
}

std::string to_json(const RunConfig& cfg) {
  json j;
  json corpus;
  if (cfg.corpus.kind == CorpusKind::synthetic) {
    const auto& s = cfg.corpus.synthetic;
    corpus = {{"kind", "synthetic"}, {"utterances", s.utterances}, {"duration_s", s.duration_s},
              {"sample_rate", s.sample_rate}, {"noises", s.noises}, {"seed", s.seed}};
  } else {
    corpus = {{"kind", "wav"}, {"speech_dir", cfg.corpus.speech_dir},
              {"noise_dir", cfg.corpus.noise_dir}};
  }
  j["corpus"] = corpus;
  json settings = json::array();
  for (const auto& s : cfg.noise_settings) settings.push_back({{"noise", s.noise}, {"snr_db", s.snr_db}});
  j["noise_settings"] = settings;
  j["mask"] = to_string(cfg.mask);
  j["irm_beta"] = cfg.irm_beta;
  j["ibm_offset_db"] = cfg.ibm_offset_db;
  j["subbands"] = cfg.subbands;
  j["features"] = {{"frame_len", cfg.features.stft.frame_len},
                   {"hop", cfg.features.stft.hop},
                   {"window", to_string(cfg.features.stft.window)},
                   {"context", cfg.features.context},
                   {"sample_rate", cfg.features.sample_rate}};
  const auto& s = cfg.search;
  j["search"] = {{"gammas", s.gammas},
                 {"sigma_lo", s.sigma_lo},
                 {"sigma_hi", s.sigma_hi},
                 {"subsample_train", s.subsample_train},
                 {"subsample_val", s.subsample_val},
                 {"seed", s.seed},
                 {"scale", to_string(s.scale)},
                 {"steps_per_octave", s.steps_per_octave}};
  const auto& v = cfg.solver;
  j["solver"] = {{"q", v.q},
                 {"m", v.m},
                 {"batch_size", v.batch_size},
                 {"max_epochs", v.max_epochs},
                 {"patience", v.patience},
                 {"step_scale", v.step_scale},
                 {"seed", v.seed}};
  j["max_train_frames"] = cfg.max_train_frames;
  j["max_val_frames"] = cfg.max_val_frames;
  j["train_fraction"] = cfg.train_fraction;
  j["val_fraction"] = cfg.val_fraction;
  j["output_dir"] = cfg.output_dir;
  j["seed"] = cfg.seed;
  j["threads"] = cfg.threads;
  return j.dump(2) + "\n";
}

RunConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg = default_config();
  Reader top(j, "config");
  if (const json* c = top.sub("corpus")) {
    Reader r(*c, "corpus");
    std::string kind = "synthetic";
    r.get("kind", kind);
    auto& s = cfg.corpus.synthetic;
    if (kind == "synthetic") {
      cfg.corpus.kind = CorpusKind::synthetic;
      r.get("utterances", s.utterances);
      r.get("duration_s", s.duration_s);
      r.get("sample_rate", s.sample_rate);
      r.get("noises", s.noises);
      r.get("seed", s.seed);
    } else if (kind == "wav") {
      cfg.corpus.kind = CorpusKind::wav;
      r.get("speech_dir", cfg.corpus.speech_dir);
      r.get("noise_dir", cfg.corpus.noise_dir);
    } else {
      throw ConfigError("corpus.kind must be 'synthetic' or 'wav'");
    }
  }
  if (const json* n = top.sub("noise_settings")) {
    if (!n->is_array()) throw ConfigError("noise_settings: expected an array");
    cfg.noise_settings.clear();
    for (const auto& e : *n) {
      Reader r(e, "noise_settings[]");
      NoiseSetting ns;
      r.get("noise", ns.noise);
      r.get("snr_db", ns.snr_db);
      if (ns.noise.empty()) throw ConfigError("noise_settings[]: missing noise name");
      cfg.noise_settings.push_back(ns);
    }
  }
  std::string mask = to_string(cfg.mask);
  top.get("mask", mask);
  cfg.mask = mask_from_string(mask);
  top.get("irm_beta", cfg.irm_beta);
  top.get("ibm_offset_db", cfg.ibm_offset_db);
  top.get("subbands", cfg.subbands);
  if (const json* f = top.sub("features")) {
    Reader r(*f, "features");
    r.get("frame_len", cfg.features.stft.frame_len);
    r.get("hop", cfg.features.stft.hop);
    std::string window = to_string(cfg.features.stft.window);
    r.get("window", window);
    cfg.features.stft.window = window_from_string(window);
    r.get("context", cfg.features.context);
    r.get("sample_rate", cfg.features.sample_rate);
  }
  if (const json* f = top.sub("search")) {
    Reader r(*f, "search");
    auto& s = cfg.search;
    r.get("gammas", s.gammas);
    r.get("sigma_lo", s.sigma_lo);
    r.get("sigma_hi", s.sigma_hi);
    r.get("subsample_train", s.subsample_train);
    r.get("subsample_val", s.subsample_val);
    r.get("seed", s.seed);
    std::string scale = to_string(s.scale);
    r.get("scale", scale);
    s.scale = scale_from_string(scale);
    r.get("steps_per_octave", s.steps_per_octave);
  }
  if (const json* f = top.sub("solver")) {
    Reader r(*f, "solver");
    auto& v = cfg.solver;
    r.get("q", v.q);
    r.get("m", v.m);
    r.get("batch_size", v.batch_size);
    r.get("max_epochs", v.max_epochs);
    r.get("patience", v.patience);
    r.get("step_scale", v.step_scale);
    r.get("seed", v.seed);
  }
  top.get("max_train_frames", cfg.max_train_frames);
  top.get("max_val_frames", cfg.max_val_frames);
  top.get("train_fraction", cfg.train_fraction);
  top.get("val_fraction", cfg.val_fraction);
  top.get("output_dir", cfg.output_dir);
  top.get("seed", cfg.seed);
  top.get("threads", cfg.threads);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  return config_from_json(read_file(path));
}

void apply(RunConfig& cfg, const Overrides& o) {
  if (o.subbands) cfg.subbands = *o.subbands;
  if (o.mask) cfg.mask = *o.mask;
  if (o.threads) cfg.threads = *o.threads;
  if (o.output_dir) cfg.output_dir = *o.output_dir;
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.corpus.synthetic.seed = *o.seed;
    cfg.search.seed = *o.seed;
    cfg.solver.seed = *o.seed;
  }
  if (o.snrs) {
    std::vector<std::string> names;
    for (const auto& s : cfg.noise_settings) {
      if (std::find(names.begin(), names.end(), s.noise) == names.end()) names.push_back(s.noise);
    }
    cfg.noise_settings.clear();
    for (const auto& n : names) {
      for (double snr : *o.snrs) cfg.noise_settings.push_back({n, snr});
    }
  }
}

}  // namespace kse
