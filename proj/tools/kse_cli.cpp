// kse: kernel-based speech enhancement command line.

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "kse/commands.hpp"

namespace {

struct Common {
  std::string config;
  kse::Overrides overrides;
  std::optional<long> subbands;
  std::vector<double> snrs;
  std::optional<unsigned long long> seed;
  std::string mask;
  std::optional<int> threads;
  std::string out;
};

void add_common(CLI::App* app, Common& c, bool config_flag = true) {
  if (config_flag) app->add_option("--config", c.config, "JSON run configuration");
  app->add_option("--subbands", c.subbands, "number of subbands b");
  app->add_option("--snr", c.snrs, "SNR grid in dB (replaces the configured SNRs)");
  app->add_option("--seed", c.seed, "seed for corpus, split, search and solver");
  app->add_option("--mask", c.mask, "mask kind")->check(CLI::IsMember({"irm", "ibm"}));
  app->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  app->add_option("--out", c.out, "output directory");
}

kse::Overrides overrides_of(const Common& c) {
  kse::Overrides o;
  if (c.subbands) o.subbands = *c.subbands;
  if (!c.snrs.empty()) o.snrs = c.snrs;
  if (c.seed) o.seed = *c.seed;
  if (!c.mask.empty()) o.mask = kse::mask_from_string(c.mask);
  if (c.threads) o.threads = *c.threads;
  if (!c.out.empty()) o.output_dir = c.out;
  return o;
}

kse::RunConfig resolve(const Common& c) {
  kse::RunConfig cfg = c.config.empty() ? kse::default_config() : kse::load_config(c.config);
  kse::apply(cfg, overrides_of(c));
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Kernel-based speech enhancement with subband kernel machines"};
  app.require_subcommand(1);

  Common mix_opts, tune_opts, train_opts, eval_opts;
  auto* mix = app.add_subcommand("mix", "write clean/noise/noisy WAVs for every noise setting");
  add_common(mix, mix_opts);
  auto* tune = app.add_subcommand("autotune", "select kernel parameters per subband");
  add_common(tune, tune_opts);
  auto* train = app.add_subcommand("train", "autotune and train a subband kernel model");
  add_common(train, train_opts);

  std::string model_path, wav_in, wav_out;
  auto* enh = app.add_subcommand("enhance", "apply a trained model to a mono WAV file");
  enh->add_option("--model", model_path, "model file")->required();
  enh->add_option("--in", wav_in, "noisy input WAV")->required();
  enh->add_option("--out", wav_out, "enhanced output WAV")->required();

  std::string eval_model;
  auto* ev = app.add_subcommand("evaluate", "score a model on the test split");
  ev->add_option("--model", eval_model, "model file")->required();
  add_common(ev, eval_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(kse::ErrorCategory::config);
  }

  try {
    if (*mix) {
      kse::cmd_mix(resolve(mix_opts), std::cerr);
    } else if (*tune) {
      kse::cmd_autotune(resolve(tune_opts), std::cerr);
    } else if (*train) {
      const auto out = kse::cmd_train(resolve(train_opts), std::cerr);
      std::cout << out.model_path << "\n";
    } else if (*enh) {
      kse::cmd_enhance(model_path, wav_in, wav_out, std::cerr);
    } else if (*ev) {
      std::optional<kse::RunConfig> cfg;
      if (!eval_opts.config.empty()) {
        cfg = kse::load_config(eval_opts.config);
      } else {
        cfg = kse::load_model(eval_model).config;
      }
      kse::apply(*cfg, overrides_of(eval_opts));
      const auto s = kse::cmd_evaluate(eval_model, cfg, std::cerr);
      std::cout << cfg->output_dir << "\n";
      (void)s;
    }
  } catch (const kse::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return static_cast<int>(e.category());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
