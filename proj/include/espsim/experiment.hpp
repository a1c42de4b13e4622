#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "espsim/adversarial.hpp"
#include "espsim/serialization.hpp"

namespace espsim {

inline constexpr const char* kToolVersion = "0.1.0";
inline constexpr const char* kEnvPrefix = "ESPSIM_";

struct PretrainSection {
  std::size_t noncheater_steps = 1'000'000;
  std::size_t cheater_steps = 2'000'000;
  std::size_t episodes_per_chunk = 64;
  std::size_t eval_every_updates = 10;
  std::size_t eval_episodes = 2000;
  std::uint64_t eval_seed = 900'000'000;
};

struct DetectorSection {
  DetectorVariant variant = DetectorVariant::trajectory;
  DatasetSizes sizes;
  int epochs = 20;
  std::size_t batch_size = 8;
  double learning_rate = 3e-4;
  std::vector<int> hidden = {64, 64};
};

struct AdversarialSection {
  double lambda = 0.1;
  AdversarialMode mode = AdversarialMode::joint;
  CheaterArch cheater = CheaterArch::structured;
  int iterations = 150;
  std::size_t episodes_per_iteration = 1024;
  int detector_passes = 1;
  std::size_t detector_batch_size = 8;
  double detector_learning_rate = 3e-4;
  std::vector<int> gating_hidden = {64, 64};
  std::size_t eval_episodes = 4000;
  std::uint64_t eval_seed = 800'000'000;
  // Sweep axes.
  std::vector<double> lambdas = {0.01, 0.1, 1.0, 10.0};
  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::vector<DetectorVariant> detectors = {DetectorVariant::trajectory};
  std::vector<AdversarialMode> modes = {AdversarialMode::joint};
};

// Everything a pipeline run depends on. JSON keys mirror the field names;
// see README for the schema.
struct ExperimentConfig {
  EnvConfig env;
  TrainConfig learner;
  PretrainSection pretrain;
  DetectorSection detector;
  AdversarialSection adversarial;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
  std::string out = "runs/default";

  void validate() const;
  AdversarialConfig adversarial_config(double lambda, std::uint64_t seed, AdversarialMode mode,
                                       CheaterArch cheater) const;
};

OrderedJson config_to_json(const ExperimentConfig& config);
// Strict: unknown keys and wrong types are ConfigErrors.
ExperimentConfig config_from_json(const Json& j);

// ESPSIM_SECTION__KEY=value sets config["section"]["key"]; values are parsed
// as JSON when possible and kept as strings otherwise.
Json apply_env_overrides(Json config, const std::map<std::string, std::string>& environment);
std::map<std::string, std::string> prefixed_environment(const char* const* envp);

ExperimentConfig load_config(const std::optional<std::filesystem::path>& path,
                             const std::map<std::string, std::string>& environment);

// 64-bit FNV-1a of the canonical config JSON (output directory excluded), hex.
std::string config_hash(const ExperimentConfig& config);

// Artifact bookkeeping in <out>/manifest.json.
class RunManifest {
 public:
  static RunManifest load_or_create(const std::filesystem::path& out_dir);

  void record_stage(const std::string& stage, const std::string& config_hash,
                    const std::map<std::string, std::string>& artifacts);
  // Throws MissingArtifact unless `stage` completed and its files exist.
  void require(const std::string& stage) const;
  void record_run(const OrderedJson& run);
  const Json& runs() const { return doc_.at("runs"); }
  std::string artifact(const std::string& stage, const std::string& key) const;
  void save() const;
  const Json& json() const { return doc_; }

 private:
  std::filesystem::path dir_;
  Json doc_;
};

struct RunSpec {
  double lambda = 0.1;
  std::uint64_t seed = 0;
  DetectorVariant detector = DetectorVariant::trajectory;
  AdversarialMode mode = AdversarialMode::joint;
  CheaterArch cheater = CheaterArch::structured;

  std::string name() const;
};

// One row of the metrics CSV.
struct RunMetrics {
  RunSpec spec;
  FinalMetrics final;
  double relative_reward = 0.0;
};

std::string metrics_csv(const std::vector<RunMetrics>& rows);
std::vector<RunMetrics> parse_metrics_csv(const std::string& text);

// Aggregated over seeds with the population standard deviation.
struct AggregateRow {
  DetectorVariant detector = DetectorVariant::trajectory;
  AdversarialMode mode = AdversarialMode::joint;
  CheaterArch cheater = CheaterArch::structured;
  double lambda = 0.0;
  std::size_t seeds = 0;
  double ap_mean = 0.0, ap_std = 0.0;
  double auroc_mean = 0.0, auroc_std = 0.0;
  double reward_mean = 0.0, reward_std = 0.0;
  double length_mean = 0.0, length_std = 0.0;
  double relative_mean = 0.0, relative_std = 0.0;
};

std::vector<AggregateRow> aggregate(const std::vector<RunMetrics>& rows);
std::string aggregate_csv(const std::vector<AggregateRow>& rows);
std::string format_mean_std(double mean, double stdev, int digits = 4);

// Pipeline stages. Each reads its inputs from the manifest in config.out,
// writes its artifacts there and logs progress to `log`.
void stage_pretrain(const ExperimentConfig& config, std::ostream& log);
void stage_make_dataset(const ExperimentConfig& config, std::ostream& log);
void stage_pretrain_detector(const ExperimentConfig& config, std::ostream& log);
void stage_eval(const ExperimentConfig& config, std::ostream& log);
RunMetrics stage_adv_train(const ExperimentConfig& config, const RunSpec& spec, std::ostream& log);
void stage_sweep(const ExperimentConfig& config, std::ostream& log);
void stage_report(const ExperimentConfig& config, std::ostream& log);

}  // namespace espsim
