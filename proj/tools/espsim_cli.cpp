// Command-line driver for the experiment pipeline.

#include <CLI11.hpp>
#include <iostream>
#include <optional>
#include <sstream>

#include "espsim/errors.hpp"
#include "espsim/experiment.hpp"

extern char** environ;

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kRuntime = 3, kNumeric = 4 };

std::vector<double> parse_lambda_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0.0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size()) throw espsim::ConfigError("bad lambda value '" + item + "'");
    out.push_back(v);
  }
  if (out.empty()) throw espsim::ConfigError("--lambda needs at least one value");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adversarial cheater / cheat-detector experiments on Gridworld and Blackjack"};
  app.require_subcommand(1);

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<std::string> lambdas;
  std::optional<std::string> mode;
  std::optional<std::string> detector;
  std::optional<std::string> cheater;
  std::optional<std::size_t> workers;
  bool quiet = false;

  app.add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "base seed (pretraining stages) or run seed (adv-train, sweep)");
  app.add_option("--out", out, "output directory");
  app.add_option("--lambda", lambdas, "comma-separated adversarial coefficients");
  app.add_option("--mode", mode, "joint or cheater_only");
  app.add_option("--detector", detector, "trajectory, length or reward");
  app.add_option("--cheater", cheater, "structured or unstructured");
  app.add_option("--workers", workers, "rollout threads");
  app.add_flag("-q,--quiet", quiet, "only print errors");

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"pretrain", "train the non-cheater and the pure cheater"},
      {"make-dataset", "play both pretrained policies into labeled train/valid/test splits"},
      {"pretrain-detector", "fit a detector on the dataset, keep the best validation checkpoint"},
      {"eval", "table of AP, AUROC, reward and length for the pretrained pair"},
      {"adv-train", "adversarial co-training for one lambda and seed"},
      {"sweep", "adv-train over every lambda, seed, detector and mode"},
      {"report", "aggregate recorded runs into summary and plot-data CSVs"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help)->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  std::ostringstream sink;
  std::ostream& log = quiet ? static_cast<std::ostream&>(sink) : std::cout;
  try {
    auto config = espsim::load_config(config_path ? std::optional<std::filesystem::path>(*config_path) : std::nullopt,
                                      espsim::prefixed_environment(environ));
    if (out) config.out = *out;
    if (workers) config.workers = *workers;
    if (detector) {
      config.detector.variant = espsim::parse_detector_variant(*detector);
      config.adversarial.detectors = {config.detector.variant};
    }
    if (mode) {
      config.adversarial.mode = espsim::parse_adversarial_mode(*mode);
      config.adversarial.modes = {config.adversarial.mode};
    }
    if (cheater) config.adversarial.cheater = espsim::parse_cheater_arch(*cheater);
    if (lambdas) {
      config.adversarial.lambdas = parse_lambda_list(*lambdas);
      config.adversarial.lambda = config.adversarial.lambdas.front();
    }
    const bool run_stage = command == "adv-train" || command == "sweep";
    if (seed && run_stage) config.adversarial.seeds = {*seed};
    if (seed && !run_stage) config.seed = *seed;
    config.validate();

    if (command == "pretrain") {
      espsim::stage_pretrain(config, log);
    } else if (command == "make-dataset") {
      espsim::stage_make_dataset(config, log);
    } else if (command == "pretrain-detector") {
      espsim::stage_pretrain_detector(config, log);
    } else if (command == "eval") {
      espsim::stage_eval(config, log);
    } else if (command == "adv-train") {
      const auto& a = config.adversarial;
      espsim::RunSpec spec{a.lambda, a.seeds.front(), config.detector.variant, a.mode, a.cheater};
      espsim::stage_adv_train(config, spec, log);
    } else if (command == "sweep") {
      espsim::stage_sweep(config, log);
    } else if (command == "report") {
      espsim::stage_report(config, log);
    }
  } catch (const espsim::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const espsim::MissingArtifact& e) {
    std::cerr << "missing artifact: " << e.what() << "\n";
    return kRuntime;
  } catch (const espsim::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
