#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "espsim/errors.hpp"
#include "espsim/serialization.hpp"

using namespace espsim;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("espsim_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("actor-critic checkpoints round trip with optimizer state") {
  Rng rng(1);
  ActorCritic m({7, 3, {5, 4}});
  m.init(rng);
  nn::Adam adam(m.params().size(), {1e-3, 0.8, 0.99, 1e-8});
  std::vector<double> g(m.params().size());
  for (double& v : g) v = rng.normal();
  adam.step(m.params(), g);
  adam.step(m.params(), g);

  const auto j = Json::parse(checkpoint_json(m, &adam).dump());
  CHECK(j.at("format") == kCheckpointFormat);
  CHECK(j.at("version") == kCheckpointVersion);
  CHECK(j.at("kind") == "actor_critic");
  nn::Adam loaded_adam;
  const auto loaded = actor_critic_from_json(j, &loaded_adam);
  CHECK(loaded.architecture() == m.architecture());
  CHECK(nn::parameter_hash(loaded.params()) == nn::parameter_hash(m.params()));
  CHECK(loaded_adam.steps() == 2);
  CHECK(loaded_adam.first_moment() == adam.first_moment());
  CHECK(loaded_adam.second_moment() == adam.second_moment());
  CHECK(loaded_adam.config().learning_rate == 1e-3);
  CHECK(loaded_adam.config().beta1 == 0.8);

  CHECK_THROWS_AS(detector_from_json(j), ConfigError);
  auto bad = j;
  bad["params"].erase(0);
  CHECK_THROWS_AS(actor_critic_from_json(bad), ConfigError);
  bad = j;
  bad["version"] = 99;
  CHECK_THROWS_AS(actor_critic_from_json(bad), ConfigError);
}

TEST_CASE("detector and gating checkpoints round trip") {
  Rng rng(2);
  auto traj = Detector::trajectory(9, {6});
  traj.init(rng);
  const auto t2 = detector_from_json(Json::parse(checkpoint_json(traj).dump()));
  CHECK(t2.variant() == DetectorVariant::trajectory);
  CHECK(t2.input_width() == 9);
  CHECK(nn::parameter_hash(t2.params()) == nn::parameter_hash(traj.params()));

  auto len = Detector::logistic(DetectorVariant::length, 17.0, -2.0);
  len.set_standardization(20.0, 4.5);
  const auto l2 = detector_from_json(Json::parse(checkpoint_json(len).dump()));
  CHECK(l2.variant() == DetectorVariant::length);
  CHECK(l2.b() == doctest::Approx(len.b()));
  CHECK(l2.t() == doctest::Approx(len.t()));
  DetectorSample s;
  s.length = 13.0;
  CHECK(l2.score(s) == len.score(s));

  GatingModel g(11, {4});
  g.init(rng);
  const auto g2 = gating_from_json(Json::parse(checkpoint_json(g).dump()));
  CHECK(g2.input_width() == 11);
  CHECK(g2.hidden() == std::vector<int>{4});
  CHECK(nn::parameter_hash(g2.params()) == nn::parameter_hash(g.params()));
}

TEST_CASE("numbers print as shortest round-trip text") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 123456789.0, 0.0, std::numeric_limits<double>::max()}) {
    const auto s = format_number(x);
    CHECK(std::stod(s) == x);
  }
  CHECK(format_number(0.5) == "0.5");
  CHECK(format_number(2.0) == "2");
}

TEST_CASE("csv writer and parser agree") {
  CsvWriter csv({"a", "b", "c"});
  csv.row({"1", "x,y", "say \"hi\""});
  csv.row({"", "2", "3"});
  const auto table = parse_csv(csv.str());
  REQUIRE(table.size() == 3);
  CHECK(table[0] == std::vector<std::string>{"a", "b", "c"});
  CHECK(table[1] == std::vector<std::string>{"1", "x,y", "say \"hi\""});
  CHECK(table[2] == std::vector<std::string>{"", "2", "3"});
  CHECK_THROWS_AS(csv.row({"1"}), ContractViolation);
}

TEST_CASE("dataset records keep their field order and read back") {
  EnvConfig env;
  env.game = Game::blackjack;
  ConstantPolicy uniform(input_width(env, Observability::full), {0.25, 0.25, 0.25, 0.25});
  const auto ep = run_episode(uniform, env, Observability::full, 5, {PlayerLabel::cheater});
  const auto row = episode_record_json(ep);
  std::vector<std::string> keys;
  for (const auto& [k, _] : row.items()) keys.push_back(k);
  CHECK(keys == std::vector<std::string>{"env", "label", "seed", "actions", "rewards", "length", "return",
                                         "encoded_detector_input"});

  const auto dir = scratch_dir("dataset");
  write_jsonl(dir / "d.jsonl", {row, row});
  const auto samples = read_dataset(dir / "d.jsonl", "make-dataset");
  REQUIRE(samples.size() == 2);
  const auto direct = make_detector_sample(ep);
  CHECK(samples[0].input == direct.input);
  CHECK(samples[0].length == direct.length);
  CHECK(samples[0].reward == direct.reward);
  CHECK(samples[0].label == 1);
  CHECK_THROWS_AS(read_dataset(dir / "missing.jsonl", "make-dataset"), MissingArtifact);
  fs::remove_all(dir);
}

TEST_CASE("missing files name the stage that makes them") {
  try {
    read_json("/nonexistent/espsim/x.json", "pretrain");
    FAIL("expected MissingArtifact");
  } catch (const MissingArtifact& e) {
    CHECK(e.stage() == "pretrain");
    CHECK(std::string(e.what()).find("pretrain") != std::string::npos);
  }
}

TEST_CASE("training curves serialize with headers") {
  std::vector<CurvePoint> curve{{0, -0.5, 1.5, {}}, {4096, 0.25, 2.0, {1.0, 0.5, 0.25, 1.3, 0.1}}};
  const auto table = parse_csv(curve_csv(curve));
  REQUIRE(table.size() == 3);
  CHECK(table[0][0] == "step");
  CHECK(table[2][0] == "4096");
  CHECK(std::stod(table[2][1]) == 0.25);
}
