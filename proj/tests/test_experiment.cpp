#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "espsim/errors.hpp"
#include "espsim/experiment.hpp"

using namespace espsim;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Seconds-scale Blackjack configuration.
ExperimentConfig tiny(const fs::path& out) {
  ExperimentConfig c;
  c.env.game = Game::blackjack;
  c.learner.hidden = {8};
  c.learner.rollout_steps = 256;
  c.pretrain.noncheater_steps = 512;
  c.pretrain.cheater_steps = 512;
  c.pretrain.eval_episodes = 50;
  c.pretrain.eval_every_updates = 1;
  c.detector.sizes = {40, 20, 20};
  c.detector.epochs = 2;
  c.detector.hidden = {8};
  c.adversarial.iterations = 2;
  c.adversarial.episodes_per_iteration = 32;
  c.adversarial.gating_hidden = {8};
  c.adversarial.eval_episodes = 40;
  c.out = out.string();
  return c;
}

}  // namespace

TEST_CASE("config survives a json round trip") {
  ExperimentConfig c;
  c.env.game = Game::gridworld;
  c.env.grid = GridConfig::desk();
  c.learner.ent_coef = 0.02;
  c.detector.variant = DetectorVariant::reward;
  c.adversarial.lambdas = {0.5, 2.0};
  c.adversarial.modes = {AdversarialMode::joint, AdversarialMode::cheater_only};
  c.seed = 17;
  const auto text = config_to_json(c).dump();
  const auto back = config_from_json(Json::parse(text));
  CHECK(config_to_json(back).dump() == text);
  CHECK(config_hash(back) == config_hash(c));
}

TEST_CASE("defaults carry the documented hyperparameters") {
  const ExperimentConfig c = config_from_json(Json::object());
  CHECK(c.learner.gae_lambda == 0.95);
  CHECK(c.learner.clip == 0.2);
  CHECK(c.learner.vf_coef == 0.5);
  CHECK(c.learner.ent_coef == 0.01);
  CHECK(c.learner.epochs == 4);
  CHECK(c.learner.learning_rate == 3e-4);
  CHECK(c.learner.adam_beta1 == 0.9);
  CHECK(c.learner.adam_beta2 == 0.999);
  CHECK(c.detector.sizes.train == 2000);
  CHECK(c.detector.sizes.valid == 400);
  CHECK(c.adversarial.lambdas == std::vector<double>{0.01, 0.1, 1.0, 10.0});
  CHECK(c.adversarial.seeds.size() == 3);
  CHECK(c.adversarial.detector_passes == 1);
  CHECK(EnvConfig::discount == 1.0);
}

TEST_CASE("config parsing is strict") {
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"lerner": {}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"learner": {"clip": "big"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"learner": {"clip": 0}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"adversarial": {"seeds": []}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"adversarial": {"mode": "solo"}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"env": {"grid": {"size": 7}}})")), ConfigError);
  CHECK_THROWS_AS(config_from_json(Json::parse(R"({"adversarial": {"lambdas": [-1]}})")), ConfigError);
}

TEST_CASE("environment overrides mirror config keys") {
  const std::map<std::string, std::string> env{{"ESPSIM_LEARNER__ENT_COEF", "0.05"},
                                               {"ESPSIM_ENV__GAME", "gridworld"},
                                               {"ESPSIM_ADVERSARIAL__LAMBDAS", "[1, 3]"},
                                               {"ESPSIM_SEED", "9"},
                                               {"OTHER", "x"}};
  const auto j = apply_env_overrides(Json::parse(R"({"learner": {"clip": 0.3}})"), env);
  const auto c = config_from_json(j);
  CHECK(c.learner.ent_coef == 0.05);
  CHECK(c.learner.clip == 0.3);
  CHECK(c.env.game == Game::gridworld);
  CHECK(c.adversarial.lambdas == std::vector<double>{1.0, 3.0});
  CHECK(c.seed == 9);
  CHECK_THROWS_AS(config_from_json(apply_env_overrides(Json::object(), {{"ESPSIM_LEARNER__TYPO", "1"}})),
                  ConfigError);
  CHECK_THROWS_AS(apply_env_overrides(Json::object(), {{"ESPSIM_LEARNER____X", "1"}}), ConfigError);

  const char* envp[] = {"ESPSIM_A=1", "PATH=/bin", "ESPSIM_B__C=two", nullptr};
  const auto pe = prefixed_environment(envp);
  CHECK(pe.size() == 2);
  CHECK(pe.at("ESPSIM_B__C") == "two");
}

TEST_CASE("config hash ignores output location and worker count") {
  ExperimentConfig a;
  ExperimentConfig b = a;
  b.out = "elsewhere";
  b.workers = 8;
  CHECK(config_hash(a) == config_hash(b));
  b.seed = 1;
  CHECK(config_hash(a) != config_hash(b));
  CHECK(config_hash(a).size() == 16);
}

TEST_CASE("aggregation uses the population standard deviation") {
  std::vector<RunMetrics> rows;
  for (int i = 0; i < 3; ++i) {
    RunMetrics r;
    r.spec.lambda = 1.0;
    r.spec.seed = static_cast<std::uint64_t>(i);
    r.final.auroc = 0.1 * (i + 1);
    rows.push_back(r);
  }
  RunMetrics other;
  other.spec.lambda = 10.0;
  rows.push_back(other);
  const auto agg = aggregate(rows);
  REQUIRE(agg.size() == 2);
  CHECK(agg[0].lambda == 1.0);
  CHECK(agg[0].seeds == 3);
  CHECK(agg[0].auroc_mean == doctest::Approx(0.2));
  CHECK(agg[0].auroc_std == doctest::Approx(0.0816).epsilon(1e-3));
  CHECK(format_mean_std(agg[0].auroc_mean, agg[0].auroc_std) == "0.2000 ± 0.0816");
  CHECK(agg[1].seeds == 1);
  CHECK(agg[1].auroc_std == 0.0);
}

TEST_CASE("metrics csv round trips") {
  RunMetrics r;
  r.spec = {0.01, 2, DetectorVariant::length, AdversarialMode::cheater_only, CheaterArch::unstructured};
  r.final.ap = 0.61;
  r.final.auroc = 0.58;
  r.final.avg_reward = -0.03;
  r.final.avg_length = 2.25;
  r.relative_reward = 0.4;
  const auto text = metrics_csv({r});
  CHECK(text.rfind("detector,lambda,seed,ap,auroc,avg_reward,avg_length,relative_reward", 0) == 0);
  const auto back = parse_metrics_csv(text);
  REQUIRE(back.size() == 1);
  CHECK(back[0].spec.name() == r.spec.name());
  CHECK(back[0].final.auroc == 0.58);
  CHECK(metrics_csv(back) == text);
  CHECK(r.spec.name() == "length_cheater_only_unstructured_lambda0.01_seed2");
}

TEST_CASE("stages refuse to run before their inputs exist") {
  const auto dir = fs::temp_directory_path() / "espsim_test_missing";
  fs::remove_all(dir);
  const auto c = tiny(dir);
  std::ostringstream log;
  auto stage_of = [&](auto&& fn) {
    try {
      fn();
    } catch (const MissingArtifact& e) {
      return e.stage();
    }
    return std::string("none");
  };
  CHECK(stage_of([&] { stage_make_dataset(c, log); }) == "pretrain");
  CHECK(stage_of([&] { stage_eval(c, log); }) == "pretrain");
  CHECK(stage_of([&] { stage_pretrain_detector(c, log); }) == "make-dataset");
  CHECK(stage_of([&] { stage_report(c, log); }) == "adv-train");
  fs::remove_all(dir);
}

TEST_CASE("full pipeline on a tiny configuration") {
  const auto dir = fs::temp_directory_path() / "espsim_test_pipeline";
  fs::remove_all(dir);
  const auto c = tiny(dir);
  std::ostringstream log;
  stage_pretrain(c, log);
  stage_make_dataset(c, log);
  CHECK_THROWS_AS(stage_adv_train(c, {}, log), MissingArtifact);
  stage_pretrain_detector(c, log);
  stage_eval(c, log);

  const auto eval = parse_csv(slurp(dir / "reports" / "eval_trajectory.csv"));
  REQUIRE(eval.size() == 3);
  CHECK(eval[0] == std::vector<std::string>{"game", "player", "detector", "ap", "auroc", "avg_reward", "avg_length"});
  CHECK(eval[1][1] == "noncheater");
  CHECK(eval[2][1] == "pure_cheater");

  stage_sweep(c, log);
  int run_dirs = 0;
  for (const auto& e : fs::directory_iterator(dir / "runs")) run_dirs += e.is_directory() && fs::exists(e.path() / "metrics.csv");
  CHECK(run_dirs == 12);
  stage_report(c, log);
  const auto agg = parse_csv(slurp(dir / "report" / "aggregate.csv"));
  CHECK(agg.size() == 5);  // header + 4 lambdas
  const auto first = slurp(dir / "report" / "runs.csv");
  CHECK(parse_csv(first).size() == 13);

  // Re-running a run with the same config and seed reproduces its metrics byte for byte.
  const auto name = RunSpec{0.1, 1}.name();
  const auto before = slurp(dir / "runs" / name / "metrics.csv");
  const auto history = slurp(dir / "runs" / name / "history.csv");
  stage_adv_train(c, RunSpec{0.1, 1}, log);
  CHECK(slurp(dir / "runs" / name / "metrics.csv") == before);
  CHECK(slurp(dir / "runs" / name / "history.csv") == history);
  stage_report(c, log);
  CHECK(slurp(dir / "report" / "runs.csv") == first);

  const auto manifest = RunManifest::load_or_create(dir);
  CHECK(manifest.runs().size() == 12);
  for (const char* stage : {"pretrain", "make-dataset", "pretrain-detector", "eval", "sweep", "report"})
    CHECK_NOTHROW(manifest.require(stage));
  CHECK(manifest.json().at("stages").at("pretrain").at("config_hash") == config_hash(c));
  fs::remove_all(dir);
}
