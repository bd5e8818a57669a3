#include "kse/commands.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <ostream>
#include <sstream>

#include "kse/io.hpp"
#include "kse/resample.hpp"
#include "kse/wav.hpp"

namespace kse {

namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir + ": " + ec.message());
}

std::string join(const Eigen::VectorXd& v) {
  std::string out;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) out += ' ';
    out += format_number(v[i]);
  }
  return out;
}

Eigen::MatrixXd soft_mask(const ModelFile& m, const Spectrogram& noisy) {
  FeatureMatrix X = extract_features(noisy, m.features.context);
  m.standardizer.apply_inplace(X);
  return predict_mask(m.model, X);
}

void write_tuning_rows(std::ostream& out, std::size_t subband, const std::vector<Evaluation>& rows) {
  for (const auto& e : rows) {
    out << "subband=" << subband << " eval gamma=" << format_number(e.gamma)
        << " sigma=" << format_number(e.sigma) << " loss=" << format_number(e.loss)
        << " cached=" << (e.cached ? 1 : 0) << "\n";
  }
}

std::string mixture_stem(const Utterance& u, const NoiseSetting& s) {
  return u.name + "_" + to_string(u.split) + "_" + s.noise + "_" + short_number(s.snr_db) + "dB";
}

}  // namespace

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string format_report_line(const EvalReport& r) {
  std::string line = "utt=" + r.utterance + " noise=" + r.noise + " snr=" + short_number(r.snr_db) +
                     " mse=" + format_number(r.mse) + " stoi_noisy=" + format_number(r.stoi_noisy) +
                     " stoi_enh=" + format_number(r.stoi_enhanced);
  if (r.accuracy) line += " acc=" + format_number(*r.accuracy);
  return line;
}

TrainOutcome cmd_train(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  ensure_dir(cfg.output_dir);
  std::ostringstream timings;
  auto t0 = Clock::now();
  const Corpus corpus = load_corpus(cfg);
  const DatasetSplits data = build_dataset(cfg, corpus);
  timings << "phase=dataset seconds=" << seconds_since(t0) << "\n";
  log << "dataset: train " << data.train.rows() << "/" << data.train_frames << " frames, val "
      << data.val.rows() << "/" << data.val_frames << ", test " << data.test.rows()
      << ", feature dim " << data.train.X.cols() << "\n";

  TrainOutcome out;
  out.train_rows = data.train.rows();
  out.val_rows = data.val.rows();
  const ChannelPartition partition = make_partition(data.train.Y.cols(), cfg.subbands);
  t0 = Clock::now();
  out.tuning = tune_subbands(data.train, data.val, partition, cfg.search, cfg.solver, cfg.threads);
  timings << "phase=autotune seconds=" << seconds_since(t0) << "\n";
  SubbandOptions opts;
  opts.workers = cfg.threads;
  opts.tuned.emplace();
  for (std::size_t i = 0; i < out.tuning.size(); ++i) {
    const auto& t = out.tuning[i];
    opts.tuned->push_back(t.result);
    log << "subband " << i << ": gamma " << t.result.gamma_opt << " sigma " << t.result.sigma_opt
        << " (" << t.trainings << " cross-validation trainings)\n";
  }

  t0 = Clock::now();
  SubbandModel model = train_subband(data.train, data.val, cfg.subbands, cfg.search, cfg.solver, opts);
  timings << "phase=train seconds=" << seconds_since(t0) << "\n";

  t0 = Clock::now();
  const Eigen::MatrixXd val_pred = predict_mask(model, data.val.X);
  out.val_mse = mse(val_pred, data.val.Y);
  out.val_mse_per_channel = mse_per_channel(val_pred, data.val.Y);
  timings << "phase=validate seconds=" << seconds_since(t0) << "\n";

  out.model.config = cfg;
  out.model.features = cfg.features;
  out.model.mask = cfg.mask;
  out.model.standardizer = data.standardizer;
  out.model.model = std::move(model);
  const std::string bytes = serialize(out.model);
  out.model_path = (fs::path(cfg.output_dir) / "model.kse").string();
  write_file_atomic(out.model_path, bytes);

  std::ostringstream r;
  r << "command=train\n"
    << "model=model.kse\n"
    << "model_checksum=" << hex64(fnv1a(bytes)) << "\n"
    << "mask=" << to_string(cfg.mask) << "\n"
    << "subbands=" << cfg.subbands << "\n"
    << "feature_dim=" << cfg.features.dim() << "\n"
    << "train_frames=" << data.train.rows() << " train_frames_total=" << data.train_frames << "\n"
    << "val_frames=" << data.val.rows() << " val_frames_total=" << data.val_frames << "\n"
    << "test_frames=" << data.test.rows() << "\n";
  int max_epochs_used = 0;
  const SubbandModel& sm = out.model.model;
  for (std::size_t i = 0; i < sm.models.size(); ++i) {
    const TrainSummary& s = sm.training[i];
    max_epochs_used = std::max(max_epochs_used, s.epochs_run);
    r << "subband=" << i << " start=" << sm.partition.bounds[i].first
      << " end=" << sm.partition.bounds[i].second
      << " gamma=" << format_number(sm.models[i].params.gamma)
      << " sigma=" << format_number(sm.models[i].params.sigma) << " epochs_run=" << s.epochs_run
      << " best_epoch=" << s.best_epoch << " early_stopped=" << (s.early_stopped ? 1 : 0)
      << " step_size=" << format_number(s.step_size) << " rank=" << s.rank
      << " cv_trainings=" << out.tuning[i].trainings << "\n";
    for (std::size_t e = 0; e < s.loss_history.size(); ++e) {
      r << "subband=" << i << " epoch=" << e + 1 << " val_loss=" << format_number(s.loss_history[e]) << "\n";
    }
    write_tuning_rows(r, i, sm.tune_results[i].evaluations);
  }
  r << "epochs_used=" << max_epochs_used << "\n"
    << "val_mse=" << format_number(out.val_mse) << "\n"
    << "val_mse_per_channel=" << join(out.val_mse_per_channel) << "\n";
  if (max_epochs_used > 10) {
    log << "warning: training used " << max_epochs_used << " epochs (more than 10)\n";
  }
  out.report_path = (fs::path(cfg.output_dir) / "train_report.txt").string();
  write_file_atomic(out.report_path, r.str());
  out.timings_path = (fs::path(cfg.output_dir) / "timings.txt").string();
  write_file_atomic(out.timings_path, timings.str());
  log << "model written to " << out.model_path << " (validation MSE " << out.val_mse << ")\n";
  return out;
}

std::vector<SubbandTuning> cmd_autotune(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  ensure_dir(cfg.output_dir);
  const auto t0 = Clock::now();
  const DatasetSplits data = build_dataset(cfg);
  const ChannelPartition partition = make_partition(data.train.Y.cols(), cfg.subbands);
  auto tuning = tune_subbands(data.train, data.val, partition, cfg.search, cfg.solver, cfg.threads);
  std::ostringstream r;
  r << "command=autotune\nsubbands=" << cfg.subbands << "\n";
  for (std::size_t i = 0; i < tuning.size(); ++i) {
    const auto& t = tuning[i];
    r << "subband=" << i << " start=" << partition.bounds[i].first
      << " end=" << partition.bounds[i].second << " gamma=" << format_number(t.result.gamma_opt)
      << " sigma=" << format_number(t.result.sigma_opt) << " trainings=" << t.trainings << "\n";
    write_tuning_rows(r, i, t.memo);
    log << "subband " << i << ": gamma " << t.result.gamma_opt << " sigma " << t.result.sigma_opt
        << ", " << t.memo.size() << " evaluations\n";
  }
  write_file_atomic((fs::path(cfg.output_dir) / "autotune_report.txt").string(), r.str());
  write_file_atomic((fs::path(cfg.output_dir) / "timings.txt").string(),
                    "phase=autotune seconds=" + std::to_string(seconds_since(t0)) + "\n");
  return tuning;
}

std::size_t cmd_mix(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  const fs::path dir = fs::path(cfg.output_dir) / "mix";
  ensure_dir(dir.string());
  const Corpus corpus = load_corpus(cfg);
  std::ostringstream manifest;
  std::size_t count = 0;
  for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
    for (std::size_t s = 0; s < cfg.noise_settings.size(); ++s) {
      PreparedMixture p = prepare_mixture(cfg, corpus, u, s);
      // One common gain keeps the SNR and keeps the mixture inside [-1, 1].
      const double peak = p.noisy.samples.cwiseAbs().maxCoeff();
      const double g = peak > 0.99 ? 0.99 / peak : 1.0;
      const std::string stem = mixture_stem(corpus.utterances[u], cfg.noise_settings[s]);
      for (auto [w, tag] : {std::pair{&p.clean, "clean"}, {&p.noise, "noise"}, {&p.noisy, "noisy"}}) {
        Waveform out = *w;
        out.samples *= g;
        write_wav((dir / (stem + "_" + tag + ".wav")).string(), out, WavFormat::float32);
      }
      manifest << "utt=" << corpus.utterances[u].name << " split=" << to_string(corpus.utterances[u].split)
               << " noise=" << cfg.noise_settings[s].noise
               << " snr=" << short_number(cfg.noise_settings[s].snr_db) << " gain=" << format_number(g)
               << " file=" << stem << "_noisy.wav\n";
      ++count;
    }
  }
  write_file_atomic((dir / "manifest.txt").string(), manifest.str());
  log << "wrote " << count << " mixtures to " << dir.string() << "\n";
  return count;
}

Eigen::MatrixXd model_mask(const ModelFile& m, const Spectrogram& noisy) {
  Eigen::MatrixXd mask = soft_mask(m, noisy);
  if (m.mask == MaskKind::ibm) mask = binarize_mask(mask, 0.5);
  return mask;
}

Waveform enhance(const ModelFile& m, const Waveform& noisy, std::ostream& log) {
  Waveform x = noisy;
  const bool convert = x.sample_rate != m.features.sample_rate;
  if (convert) {
    log << "warning: input at " << x.sample_rate << " Hz, model at " << m.features.sample_rate
        << " Hz; resampling\n";
    x = resample(x, m.features.sample_rate);
  }
  const Spectrogram spec = stft(x, m.features.stft);
  Waveform y = istft(apply_mask(spec, model_mask(m, spec)));
  if (convert) {
    y = resample(y, noisy.sample_rate);
    const Eigen::Index n = y.size();
    y.samples.conservativeResize(noisy.size());
    if (n < noisy.size()) y.samples.tail(noisy.size() - n).setZero();
  }
  return y;
}

void cmd_enhance(const std::string& model_path, const std::string& wav_in,
                 const std::string& wav_out, std::ostream& log) {
  const ModelFile m = load_model(model_path);
  const Waveform in = read_wav(wav_in);
  write_wav(wav_out, enhance(m, in, log), WavFormat::float32);
  log << "enhanced " << wav_in << " -> " << wav_out << "\n";
}

EvalSummary evaluate(const RunConfig& cfg, const Corpus& corpus, const MaskFn& mask_fn,
                     const std::string& model_id) {
  EvalSummary out;
  for (std::size_t s = 0; s < cfg.noise_settings.size(); ++s) {
    SettingSummary sum;
    sum.setting = cfg.noise_settings[s];
    sum.mse_per_channel = Eigen::VectorXd::Zero(cfg.features.bins());
    double acc = 0.0, zeros = 0.0, mse_total = 0.0;
    for (std::size_t u = 0; u < corpus.utterances.size(); ++u) {
      if (corpus.utterances[u].split != SplitTag::test) continue;
      const PreparedMixture p = prepare_mixture(cfg, corpus, u, s);
      const Eigen::MatrixXd soft = mask_fn(p);
      EvalReport r;
      r.utterance = corpus.utterances[u].name;
      r.noise = sum.setting.noise;
      r.snr_db = sum.setting.snr_db;
      r.model_id = model_id;
      r.frames = p.target.rows();
      r.mse_per_channel = mse_per_channel(soft, p.target);
      r.mse = r.mse_per_channel.mean();
      Eigen::MatrixXd applied = soft;
      if (cfg.mask == MaskKind::ibm) {
        applied = binarize_mask(soft, 0.5);
        r.accuracy = accuracy(applied, p.target);
        const double z = accuracy(Eigen::MatrixXd::Zero(soft.rows(), soft.cols()), p.target);
        acc += *r.accuracy * static_cast<double>(r.frames);
        zeros += z * static_cast<double>(r.frames);
      }
      const Waveform enhanced = istft(apply_mask(p.noisy_spec, applied));
      r.stoi_noisy = stoi(p.clean, p.noisy);
      r.stoi_enhanced = stoi(p.clean, enhanced);

      sum.utterances += 1;
      sum.frames += r.frames;
      mse_total += r.mse * static_cast<double>(r.frames);
      sum.mse_per_channel += r.mse_per_channel * static_cast<double>(r.frames);
      sum.stoi_noisy += r.stoi_noisy;
      sum.stoi_enhanced += r.stoi_enhanced;
      out.reports.push_back(std::move(r));
    }
    if (sum.utterances == 0) throw DataError("evaluation: the test split is empty");
    const double frames = static_cast<double>(sum.frames);
    sum.mse = mse_total / frames;
    sum.mse_per_channel /= frames;
    sum.stoi_noisy /= static_cast<double>(sum.utterances);
    sum.stoi_enhanced /= static_cast<double>(sum.utterances);
    if (cfg.mask == MaskKind::ibm) {
      sum.accuracy = acc / frames;
      sum.zeros_accuracy = zeros / frames;
    }
    out.settings.push_back(std::move(sum));
  }
  return out;
}

void write_eval_files(const RunConfig& cfg, const EvalSummary& s, const std::string& dir) {
  ensure_dir(dir);
  std::ostringstream lines;
  for (const auto& r : s.reports) lines << format_report_line(r) << "\n";
  write_file_atomic((fs::path(dir) / "eval_utterances.txt").string(), lines.str());

  std::ostringstream summary;
  summary << "command=evaluate\nmask=" << to_string(cfg.mask) << "\npesq=unavailable\n";
  for (const auto& g : s.settings) {
    summary << "noise=" << g.setting.noise << " snr=" << short_number(g.setting.snr_db)
            << " utterances=" << g.utterances << " frames=" << g.frames
            << " mse=" << format_number(g.mse) << " stoi_noisy=" << format_number(g.stoi_noisy)
            << " stoi_enh=" << format_number(g.stoi_enhanced);
    if (g.accuracy) {
      summary << " acc=" << format_number(*g.accuracy)
              << " acc_all_zeros=" << format_number(g.zeros_accuracy);
    }
    summary << "\n";
  }
  write_file_atomic((fs::path(dir) / "eval_summary.txt").string(), summary.str());

  std::ostringstream table;
  table << "channel\tfreq_hz";
  for (const auto& g : s.settings) table << "\t" << g.setting.noise << "_" << short_number(g.setting.snr_db) << "dB";
  table << "\n";
  const Eigen::Index bins = cfg.features.bins();
  for (Eigen::Index c = 0; c < bins; ++c) {
    table << c << "\t"
          << format_number(static_cast<double>(c) * cfg.features.sample_rate /
                           static_cast<double>(cfg.features.stft.frame_len));
    for (const auto& g : s.settings) table << "\t" << format_number(g.mse_per_channel[c]);
    table << "\n";
  }
  write_file_atomic((fs::path(dir) / "channel_mse.tsv").string(), table.str());
}

EvalSummary cmd_evaluate(const std::string& model_path, const std::optional<RunConfig>& cfg_in,
                         std::ostream& log) {
  const std::string bytes = read_file(model_path);
  const ModelFile m = deserialize(bytes);
  RunConfig cfg = cfg_in ? *cfg_in : m.config;
  validate(cfg);
  if (cfg.features.dim() != m.standardizer.dim() || cfg.features.bins() != m.model.channels()) {
    throw ConfigError("evaluate: configuration feature layout does not match the model");
  }
  if (cfg.mask != m.mask) throw ConfigError("evaluate: configuration mask kind differs from the model's");
  const Corpus corpus = load_corpus(cfg);
  const EvalSummary s = evaluate(cfg, corpus,
                                 [&](const PreparedMixture& p) { return soft_mask(m, p.noisy_spec); },
                                 hex64(fnv1a(bytes)));
  write_eval_files(cfg, s, cfg.output_dir);
  for (const auto& g : s.settings) {
    log << g.setting.noise << " " << g.setting.snr_db << " dB: mse " << g.mse << ", stoi "
        << g.stoi_noisy << " -> " << g.stoi_enhanced;
    if (g.accuracy) log << ", accuracy " << *g.accuracy;
    log << "\n";
  }
  return s;
}

}  // namespace kse
