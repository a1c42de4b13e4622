#include "espsim/experiment.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>
#include <tuple>

#include "espsim/errors.hpp"
#include "espsim/metrics.hpp"

namespace espsim {

namespace fs = std::filesystem;

namespace {

// Pulls typed fields out of one JSON object and rejects leftovers.
class Section {
 public:
  Section(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const Json::exception&) {
      throw ConfigError(path_ + "." + key + " has the wrong type");
    }
  }

  template <typename Parse, typename T>
  void get_enum(const char* key, T& out, Parse parse) {
    std::string name;
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (!j_.at(key).is_string()) throw ConfigError(path_ + "." + key + " must be a string");
    out = parse(j_.at(key).get<std::string>());
  }

  template <typename Parse, typename T>
  void get_enum_list(const char* key, std::vector<T>& out, Parse parse) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    if (!j_.at(key).is_array()) throw ConfigError(path_ + "." + key + " must be a list");
    out.clear();
    for (const auto& v : j_.at(key)) {
      if (!v.is_string()) throw ConfigError(path_ + "." + key + " entries must be strings");
      out.push_back(parse(v.get<std::string>()));
    }
  }

  Section sub(const char* key) {
    seen_.insert(key);
    static const Json empty = Json::object();
    return Section(j_.contains(key) ? j_.at(key) : empty, path_.empty() ? key : path_ + "." + key);
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!seen_.count(key)) throw ConfigError("unknown config key " + (path_.empty() ? key : path_ + "." + key));
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::uint64_t fnv1a(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::vector<std::string> names(const std::vector<DetectorVariant>& v) {
  std::vector<std::string> out;
  for (auto d : v) out.push_back(to_string(d));
  return out;
}

std::vector<std::string> names(const std::vector<AdversarialMode>& v) {
  std::vector<std::string> out;
  for (auto m : v) out.push_back(to_string(m));
  return out;
}

fs::path out_dir(const ExperimentConfig& config) { return fs::path(config.out); }

}  // namespace

void ExperimentConfig::validate() const {
  env.validate();
  learner.validate();
  if (workers == 0) throw ConfigError("workers must be positive");
  if (pretrain.eval_episodes == 0 || pretrain.episodes_per_chunk == 0 || pretrain.eval_every_updates == 0)
    throw ConfigError("pretrain evaluation and chunk sizes must be positive");
  if (detector.sizes.train == 0 || detector.sizes.valid == 0 || detector.sizes.test == 0)
    throw ConfigError("detector dataset sizes must be positive");
  DetectorTrainConfig{detector.variant, detector.epochs, detector.batch_size, detector.learning_rate, detector.hidden, 0}
      .validate();
  if (adversarial.seeds.empty()) throw ConfigError("adversarial.seeds must be non-empty");
  if (adversarial.lambdas.empty()) throw ConfigError("adversarial.lambdas must be non-empty");
  if (adversarial.detectors.empty() || adversarial.modes.empty())
    throw ConfigError("adversarial.detectors and adversarial.modes must be non-empty");
  if (adversarial.eval_episodes == 0) throw ConfigError("adversarial.eval_episodes must be positive");
  for (double l : adversarial.lambdas)
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambdas must be finite and non-negative");
  adversarial_config(adversarial.lambda, 0, adversarial.mode, adversarial.cheater).validate();
}

AdversarialConfig ExperimentConfig::adversarial_config(double lambda, std::uint64_t run_seed, AdversarialMode mode,
                                                       CheaterArch cheater) const {
  AdversarialConfig c;
  c.lambda = lambda;
  c.mode = mode;
  c.cheater_arch = cheater;
  c.iterations = adversarial.iterations;
  c.episodes_per_iteration = adversarial.episodes_per_iteration;
  c.detector_passes = adversarial.detector_passes;
  c.detector_batch_size = adversarial.detector_batch_size;
  c.detector_learning_rate = adversarial.detector_learning_rate;
  c.ppo = learner;
  c.gating_hidden = adversarial.gating_hidden;
  c.seed = run_seed;
  c.workers = workers;
  return c;
}

OrderedJson config_to_json(const ExperimentConfig& c) {
  OrderedJson j;
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  j["out"] = c.out;
  auto& env = j["env"];
  env["game"] = to_string(c.env.game);
  env["grid"] = {{"grid_size", c.env.grid.grid_size}, {"view_size", c.env.grid.view_size},
                 {"n_items", c.env.grid.n_items},     {"n_walls", c.env.grid.n_walls},
                 {"n_lava", c.env.grid.n_lava},       {"max_len", c.env.grid.max_len}};
  env["blackjack"] = {{"reveal_depth", c.env.blackjack.reveal_depth},
                      {"history_pad", c.env.blackjack.history_pad},
                      {"max_len", c.env.blackjack.max_len}};
  const auto& l = c.learner;
  j["learner"] = {{"gae_lambda", l.gae_lambda},
                  {"clip", l.clip},
                  {"vf_coef", l.vf_coef},
                  {"ent_coef", l.ent_coef},
                  {"epochs", l.epochs},
                  {"minibatch_size", l.minibatch_size},
                  {"learning_rate", l.learning_rate},
                  {"adam_beta1", l.adam_beta1},
                  {"adam_beta2", l.adam_beta2},
                  {"rollout_steps", l.rollout_steps},
                  {"max_grad_norm", l.max_grad_norm},
                  {"normalize_advantages", l.normalize_advantages},
                  {"hidden", l.hidden}};
  const auto& p = c.pretrain;
  j["pretrain"] = {{"noncheater_steps", p.noncheater_steps}, {"cheater_steps", p.cheater_steps},
                   {"episodes_per_chunk", p.episodes_per_chunk}, {"eval_every_updates", p.eval_every_updates},
                   {"eval_episodes", p.eval_episodes},       {"eval_seed", p.eval_seed}};
  const auto& d = c.detector;
  j["detector"] = {{"variant", to_string(d.variant)}, {"train", d.sizes.train}, {"valid", d.sizes.valid},
                   {"test", d.sizes.test},            {"epochs", d.epochs},       {"batch_size", d.batch_size},
                   {"learning_rate", d.learning_rate}, {"hidden", d.hidden}};
  const auto& a = c.adversarial;
  j["adversarial"] = {{"lambda", a.lambda},
                      {"mode", to_string(a.mode)},
                      {"cheater", to_string(a.cheater)},
                      {"iterations", a.iterations},
                      {"episodes_per_iteration", a.episodes_per_iteration},
                      {"detector_passes", a.detector_passes},
                      {"detector_batch_size", a.detector_batch_size},
                      {"detector_learning_rate", a.detector_learning_rate},
                      {"gating_hidden", a.gating_hidden},
                      {"eval_episodes", a.eval_episodes},
                      {"eval_seed", a.eval_seed},
                      {"lambdas", a.lambdas},
                      {"seeds", a.seeds},
                      {"detectors", names(a.detectors)},
                      {"modes", names(a.modes)}};
  return j;
}

ExperimentConfig config_from_json(const Json& j) {
  ExperimentConfig c;
  Section root(j, "");
  root.get("seed", c.seed);
  root.get("workers", c.workers);
  root.get("out", c.out);
  {
    auto env = root.sub("env");
    env.get_enum("game", c.env.game, parse_game);
    auto grid = env.sub("grid");
    grid.get("grid_size", c.env.grid.grid_size);
    grid.get("view_size", c.env.grid.view_size);
    grid.get("n_items", c.env.grid.n_items);
    grid.get("n_walls", c.env.grid.n_walls);
    grid.get("n_lava", c.env.grid.n_lava);
    grid.get("max_len", c.env.grid.max_len);
    grid.finish();
    auto bj = env.sub("blackjack");
    bj.get("reveal_depth", c.env.blackjack.reveal_depth);
    bj.get("history_pad", c.env.blackjack.history_pad);
    bj.get("max_len", c.env.blackjack.max_len);
    bj.finish();
    env.finish();
  }
  {
    auto l = root.sub("learner");
    auto& t = c.learner;
    l.get("gae_lambda", t.gae_lambda);
    l.get("clip", t.clip);
    l.get("vf_coef", t.vf_coef);
    l.get("ent_coef", t.ent_coef);
    l.get("epochs", t.epochs);
    l.get("minibatch_size", t.minibatch_size);
    l.get("learning_rate", t.learning_rate);
    l.get("adam_beta1", t.adam_beta1);
    l.get("adam_beta2", t.adam_beta2);
    l.get("rollout_steps", t.rollout_steps);
    l.get("max_grad_norm", t.max_grad_norm);
    l.get("normalize_advantages", t.normalize_advantages);
    l.get("hidden", t.hidden);
    l.finish();
  }
  {
    auto p = root.sub("pretrain");
    p.get("noncheater_steps", c.pretrain.noncheater_steps);
    p.get("cheater_steps", c.pretrain.cheater_steps);
    p.get("episodes_per_chunk", c.pretrain.episodes_per_chunk);
    p.get("eval_every_updates", c.pretrain.eval_every_updates);
    p.get("eval_episodes", c.pretrain.eval_episodes);
    p.get("eval_seed", c.pretrain.eval_seed);
    p.finish();
  }
  {
    auto d = root.sub("detector");
    d.get_enum("variant", c.detector.variant, parse_detector_variant);
    d.get("train", c.detector.sizes.train);
    d.get("valid", c.detector.sizes.valid);
    d.get("test", c.detector.sizes.test);
    d.get("epochs", c.detector.epochs);
    d.get("batch_size", c.detector.batch_size);
    d.get("learning_rate", c.detector.learning_rate);
    d.get("hidden", c.detector.hidden);
    d.finish();
  }
  {
    auto a = root.sub("adversarial");
    auto& s = c.adversarial;
    a.get("lambda", s.lambda);
    a.get_enum("mode", s.mode, parse_adversarial_mode);
    a.get_enum("cheater", s.cheater, parse_cheater_arch);
    a.get("iterations", s.iterations);
    a.get("episodes_per_iteration", s.episodes_per_iteration);
    a.get("detector_passes", s.detector_passes);
    a.get("detector_batch_size", s.detector_batch_size);
    a.get("detector_learning_rate", s.detector_learning_rate);
    a.get("gating_hidden", s.gating_hidden);
    a.get("eval_episodes", s.eval_episodes);
    a.get("eval_seed", s.eval_seed);
    a.get("lambdas", s.lambdas);
    a.get("seeds", s.seeds);
    a.get_enum_list("detectors", s.detectors, parse_detector_variant);
    a.get_enum_list("modes", s.modes, parse_adversarial_mode);
    a.finish();
  }
  root.finish();
  c.validate();
  return c;
}

Json apply_env_overrides(Json config, const std::map<std::string, std::string>& environment) {
  const std::string prefix = kEnvPrefix;
  for (const auto& [name, value] : environment) {
    if (name.rfind(prefix, 0) != 0) continue;
    std::vector<std::string> path;
    std::string rest = name.substr(prefix.size());
    for (std::size_t pos; (pos = rest.find("__")) != std::string::npos; rest = rest.substr(pos + 2))
      path.push_back(lower(rest.substr(0, pos)));
    path.push_back(lower(rest));
    if (std::any_of(path.begin(), path.end(), [](const std::string& p) { return p.empty(); }))
      throw ConfigError("malformed override variable " + name);
    Json parsed;
    try {
      parsed = Json::parse(value);
    } catch (const Json::parse_error&) {
      parsed = value;
    }
    Json* node = &config;
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      if (!node->is_object()) throw ConfigError("override " + name + " does not address a config section");
      node = &(*node)[path[i]];
      if (node->is_null()) *node = Json::object();
    }
    if (!node->is_object()) throw ConfigError("override " + name + " does not address a config section");
    (*node)[path.back()] = parsed;
  }
  return config;
}

std::map<std::string, std::string> prefixed_environment(const char* const* envp) {
  std::map<std::string, std::string> out;
  for (; envp && *envp; ++envp) {
    const std::string entry = *envp;
    if (entry.rfind(kEnvPrefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    out[entry.substr(0, eq)] = entry.substr(eq + 1);
  }
  return out;
}

ExperimentConfig load_config(const std::optional<fs::path>& path, const std::map<std::string, std::string>& environment) {
  Json j = Json::object();
  if (path) {
    std::ifstream in(*path);
    if (!in) throw ConfigError("cannot open config file " + path->string());
    try {
      j = Json::parse(in);
    } catch (const Json::parse_error& e) {
      throw ConfigError(path->string() + ": " + e.what());
    }
  }
  return config_from_json(apply_env_overrides(std::move(j), environment));
}

std::string config_hash(const ExperimentConfig& config) {
  auto j = config_to_json(config);
  j.erase("out");
  j.erase("workers");  // results do not depend on the worker count
  return hex64(fnv1a(j.dump()));
}

RunManifest RunManifest::load_or_create(const fs::path& out_dir) {
  RunManifest m;
  m.dir_ = out_dir;
  const auto path = out_dir / "manifest.json";
  if (fs::exists(path)) {
    m.doc_ = read_json(path, "pretrain");
  } else {
    m.doc_ = {{"tool_version", kToolVersion}, {"stages", Json::object()}, {"runs", Json::array()}};
  }
  return m;
}

void RunManifest::record_stage(const std::string& stage, const std::string& hash,
                               const std::map<std::string, std::string>& artifacts) {
  auto& entry = doc_["stages"][stage];
  entry["config_hash"] = hash;
  entry["tool_version"] = kToolVersion;
  for (const auto& [key, path] : artifacts) entry["artifacts"][key] = {{"path", path}, {"config_hash", hash}};
}

void RunManifest::require(const std::string& stage) const {
  const auto& stages = doc_.at("stages");
  if (!stages.contains(stage))
    throw MissingArtifact("no '" + stage + "' outputs recorded in " + (dir_ / "manifest.json").string() +
                              "; run the '" + stage + "' stage first",
                          stage);
  for (const auto& [key, art] : stages.at(stage).at("artifacts").items()) {
    const auto path = dir_ / art.at("path").get<std::string>();
    if (!fs::exists(path))
      throw MissingArtifact(path.string() + " is missing; re-run the '" + stage + "' stage", stage);
  }
}

std::string RunManifest::artifact(const std::string& stage, const std::string& key) const {
  require(stage);
  const auto& arts = doc_.at("stages").at(stage).at("artifacts");
  if (!arts.contains(key))
    throw MissingArtifact("the '" + stage + "' stage did not record '" + key + "'; re-run it", stage);
  return (dir_ / arts.at(key).at("path").get<std::string>()).string();
}

void RunManifest::record_run(const OrderedJson& run) {
  auto& runs = doc_["runs"];
  const std::string name = run.at("name").get<std::string>();
  for (auto& r : runs) {
    if (r.at("name") == name) {
      r = Json::parse(run.dump());
      return;
    }
  }
  runs.push_back(Json::parse(run.dump()));
}

void RunManifest::save() const { write_json(dir_ / "manifest.json", doc_); }

std::string RunSpec::name() const {
  return to_string(detector) + "_" + to_string(mode) + "_" + to_string(cheater) + "_lambda" + format_number(lambda) +
         "_seed" + std::to_string(seed);
}

namespace {

const std::vector<std::string> kMetricsHeader = {"detector", "lambda",     "seed",       "ap",
                                                 "auroc",    "avg_reward", "avg_length", "relative_reward",
                                                 "mode",     "cheater"};

}  // namespace

std::string metrics_csv(const std::vector<RunMetrics>& rows) {
  CsvWriter csv(kMetricsHeader);
  for (const auto& r : rows) {
    csv.row({to_string(r.spec.detector), format_number(r.spec.lambda), std::to_string(r.spec.seed),
             format_number(r.final.ap), format_number(r.final.auroc), format_number(r.final.avg_reward),
             format_number(r.final.avg_length), format_number(r.relative_reward), to_string(r.spec.mode),
             to_string(r.spec.cheater)});
  }
  return csv.str();
}

std::vector<RunMetrics> parse_metrics_csv(const std::string& text) {
  const auto table = parse_csv(text);
  if (table.empty() || table.front() != kMetricsHeader) throw ConfigError("not a metrics CSV");
  std::vector<RunMetrics> out;
  for (std::size_t i = 1; i < table.size(); ++i) {
    const auto& r = table[i];
    if (r.size() != kMetricsHeader.size()) throw ConfigError("metrics CSV row " + std::to_string(i) + " is malformed");
    RunMetrics m;
    m.spec.detector = parse_detector_variant(r[0]);
    m.spec.lambda = std::stod(r[1]);
    m.spec.seed = std::stoull(r[2]);
    m.final.ap = std::stod(r[3]);
    m.final.auroc = std::stod(r[4]);
    m.final.avg_reward = std::stod(r[5]);
    m.final.avg_length = std::stod(r[6]);
    m.relative_reward = std::stod(r[7]);
    m.spec.mode = parse_adversarial_mode(r[8]);
    m.spec.cheater = parse_cheater_arch(r[9]);
    out.push_back(m);
  }
  return out;
}

std::vector<AggregateRow> aggregate(const std::vector<RunMetrics>& rows) {
  using Key = std::tuple<int, int, int, double>;
  std::map<Key, std::vector<const RunMetrics*>> groups;
  for (const auto& r : rows)
    groups[{static_cast<int>(r.spec.detector), static_cast<int>(r.spec.mode), static_cast<int>(r.spec.cheater),
            r.spec.lambda}]
        .push_back(&r);
  std::vector<AggregateRow> out;
  for (const auto& [key, members] : groups) {
    AggregateRow a;
    a.detector = members.front()->spec.detector;
    a.mode = members.front()->spec.mode;
    a.cheater = members.front()->spec.cheater;
    a.lambda = members.front()->spec.lambda;
    a.seeds = members.size();
    auto stat = [&](auto field, double& m, double& s) {
      std::vector<double> v;
      for (const auto* r : members) v.push_back(field(*r));
      m = mean(v);
      s = population_stdev(v);
    };
    stat([](const RunMetrics& r) { return r.final.ap; }, a.ap_mean, a.ap_std);
    stat([](const RunMetrics& r) { return r.final.auroc; }, a.auroc_mean, a.auroc_std);
    stat([](const RunMetrics& r) { return r.final.avg_reward; }, a.reward_mean, a.reward_std);
    stat([](const RunMetrics& r) { return r.final.avg_length; }, a.length_mean, a.length_std);
    stat([](const RunMetrics& r) { return r.relative_reward; }, a.relative_mean, a.relative_std);
    out.push_back(a);
  }
  return out;
}

std::string aggregate_csv(const std::vector<AggregateRow>& rows) {
  CsvWriter csv({"detector", "mode", "cheater", "lambda", "seeds", "ap_mean", "ap_std", "auroc_mean", "auroc_std",
                 "reward_mean", "reward_std", "length_mean", "length_std", "relative_reward_mean",
                 "relative_reward_std"});
  for (const auto& a : rows) {
    csv.row({to_string(a.detector), to_string(a.mode), to_string(a.cheater), format_number(a.lambda),
             std::to_string(a.seeds), format_number(a.ap_mean), format_number(a.ap_std), format_number(a.auroc_mean),
             format_number(a.auroc_std), format_number(a.reward_mean), format_number(a.reward_std),
             format_number(a.length_mean), format_number(a.length_std), format_number(a.relative_mean),
             format_number(a.relative_std)});
  }
  return csv.str();
}

std::string format_mean_std(double m, double s, int digits) {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.*f ± %.*f", digits, m, digits, s);
  return buf;
}

// ---------------------------------------------------------------------------
// Stages

namespace {

std::uint64_t stage_seed(const ExperimentConfig& c, std::uint64_t stream) { return derive_seed(c.seed, stream); }

struct PolicyPair {
  std::shared_ptr<const ActorCritic> noncheater;
  std::shared_ptr<const ActorCritic> pure;
};

PolicyPair load_policies(const RunManifest& manifest) {
  PolicyPair p;
  p.noncheater = std::make_shared<ActorCritic>(
      actor_critic_from_json(read_json(manifest.artifact("pretrain", "noncheater"), "pretrain")));
  p.pure = std::make_shared<ActorCritic>(
      actor_critic_from_json(read_json(manifest.artifact("pretrain", "pure_cheater"), "pretrain")));
  return p;
}

void check_policies(const ExperimentConfig& c, const PolicyPair& p) {
  if (p.noncheater->input_width() != input_width(c.env, Observability::partial) ||
      p.pure->input_width() != input_width(c.env, Observability::full))
    throw ConfigError("pretrained policies do not match the configured environment; re-run 'pretrain'");
}

std::string detector_key(DetectorVariant v) { return "detector_" + to_string(v); }

}  // namespace

void stage_pretrain(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const auto dir = out_dir(config);
  auto manifest = RunManifest::load_or_create(dir);
  const auto hash = config_hash(config);

  auto train = [&](Observability mode, std::size_t budget, std::uint64_t seed, const std::string& who) {
    PretrainOptions opt;
    opt.budget_steps = budget;
    opt.episodes_per_chunk = config.pretrain.episodes_per_chunk;
    opt.eval_every_updates = config.pretrain.eval_every_updates;
    opt.eval_episodes = config.pretrain.eval_episodes;
    opt.eval_seed = config.pretrain.eval_seed;
    opt.seed = seed;
    opt.on_eval = [&](const CurvePoint& p) {
      log << "[pretrain " << who << "] step " << p.step << " reward " << format_number(p.reward) << " length "
          << format_number(p.length) << "\n";
      log.flush();
    };
    return pretrain_policy(config.env, mode, config.learner, opt);
  };
  const auto noncheater = train(Observability::partial, config.pretrain.noncheater_steps, stage_seed(config, 1), "noncheater");
  const auto pure = train(Observability::full, config.pretrain.cheater_steps, stage_seed(config, 2), "pure_cheater");

  write_json(dir / "policies" / "noncheater.json", checkpoint_json(noncheater.model));
  write_json(dir / "policies" / "pure_cheater.json", checkpoint_json(pure.model));
  write_text(dir / "curves" / "pretrain_noncheater.csv", curve_csv(noncheater.curve));
  write_text(dir / "curves" / "pretrain_pure_cheater.csv", curve_csv(pure.curve));

  // Reference rewards on the adversarial evaluation seeds, for relative reward.
  const auto rn = evaluate_policy(noncheater.model, config.env, Observability::partial,
                                  config.adversarial.eval_episodes, config.adversarial.eval_seed);
  const auto rp = evaluate_policy(pure.model, config.env, Observability::full, config.adversarial.eval_episodes,
                                  config.adversarial.eval_seed);
  OrderedJson ref;
  ref["eval_seed"] = config.adversarial.eval_seed;
  ref["eval_episodes"] = config.adversarial.eval_episodes;
  ref["noncheater_reward"] = rn.avg_reward;
  ref["noncheater_length"] = rn.avg_length;
  ref["pure_cheater_reward"] = rp.avg_reward;
  ref["pure_cheater_length"] = rp.avg_length;
  write_text(dir / "policies" / "reference.json", ref.dump(1) + "\n");
  log << "[pretrain] noncheater reward " << format_number(rn.avg_reward) << " length " << format_number(rn.avg_length)
      << "; pure cheater reward " << format_number(rp.avg_reward) << " length " << format_number(rp.avg_length)
      << "\n";

  manifest.record_stage("pretrain", hash,
                        {{"noncheater", "policies/noncheater.json"},
                         {"pure_cheater", "policies/pure_cheater.json"},
                         {"reference", "policies/reference.json"},
                         {"curve_noncheater", "curves/pretrain_noncheater.csv"},
                         {"curve_pure_cheater", "curves/pretrain_pure_cheater.csv"}});
  manifest.save();
}

void stage_make_dataset(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const auto dir = out_dir(config);
  auto manifest = RunManifest::load_or_create(dir);
  const auto policies = load_policies(manifest);
  check_policies(config, policies);

  const auto& sizes = config.detector.sizes;
  std::uint64_t base = stage_seed(config, 3) & 0xffffffffffffULL;
  std::map<std::string, std::string> artifacts;
  const std::pair<const char*, std::size_t> splits[] = {{"train", sizes.train}, {"valid", sizes.valid}, {"test", sizes.test}};
  for (const auto& [split, n] : splits) {
    std::vector<OrderedJson> rows;
    EnvConfig env = config.env;
    env.seed = base;
    for (const auto& ep : collect_rollouts(*policies.noncheater, env, Observability::partial, n, config.workers,
                                           {PlayerLabel::noncheater}))
      rows.push_back(episode_record_json(ep));
    env.seed = base + n;
    for (const auto& ep :
         collect_rollouts(*policies.pure, env, Observability::full, n, config.workers, {PlayerLabel::cheater}))
      rows.push_back(episode_record_json(ep));
    base += 2 * n;
    const std::string rel = std::string("datasets/") + split + ".jsonl";
    write_jsonl(dir / rel, rows);
    artifacts[split] = rel;
    log << "[make-dataset] " << split << ": " << rows.size() << " episodes\n";
  }
  manifest.record_stage("make-dataset", config_hash(config), artifacts);
  manifest.save();
}

void stage_pretrain_detector(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const auto dir = out_dir(config);
  auto manifest = RunManifest::load_or_create(dir);
  LabeledDataset ds;
  ds.train = read_dataset(manifest.artifact("make-dataset", "train"), "make-dataset");
  ds.valid = read_dataset(manifest.artifact("make-dataset", "valid"), "make-dataset");
  ds.test = read_dataset(manifest.artifact("make-dataset", "test"), "make-dataset");
  std::erase_if(ds.train, [](const DetectorSample& s) { return s.input.empty(); });
  std::erase_if(ds.valid, [](const DetectorSample& s) { return s.input.empty(); });
  std::erase_if(ds.test, [](const DetectorSample& s) { return s.input.empty(); });

  DetectorTrainConfig tc;
  tc.variant = config.detector.variant;
  tc.epochs = config.detector.epochs;
  tc.batch_size = config.detector.batch_size;
  tc.learning_rate = config.detector.learning_rate;
  tc.hidden = config.detector.hidden;
  tc.seed = stage_seed(config, 4);
  const auto result = pretrain_detector(ds, tc, [&](const DetectorEpoch& e) {
    log << "[pretrain-detector " << to_string(tc.variant) << "] epoch " << e.epoch << " train "
        << format_number(e.train_loss) << " valid " << format_number(e.valid.loss) << " auroc "
        << format_number(e.valid.auroc) << "\n";
  });

  const std::string variant = to_string(tc.variant);
  const std::string ckpt = "detectors/" + variant + ".json";
  const std::string curve = "curves/detector_" + variant + ".csv";
  const std::string report = "reports/detector_" + variant + ".csv";
  write_json(dir / ckpt, checkpoint_json(result.detector, &result.optimizer));
  write_text(dir / curve, detector_curve_csv(result.curve));
  CsvWriter csv({"detector", "best_epoch", "valid_loss", "test_loss", "test_ap", "test_auroc", "b", "t"});
  csv.row({variant, std::to_string(result.best_epoch), format_number(result.valid.loss),
           format_number(result.test.loss), format_number(result.test.ap), format_number(result.test.auroc),
           format_number(result.detector.b()), format_number(result.detector.t())});
  write_text(dir / report, csv.str());
  log << "[pretrain-detector " << variant << "] best epoch " << result.best_epoch << " test AP "
      << format_number(result.test.ap) << " AUROC " << format_number(result.test.auroc) << "\n";

  // Detector variants share one stage entry, keyed per variant.
  auto stages = manifest.json().at("stages");
  std::map<std::string, std::string> artifacts;
  if (stages.contains("pretrain-detector"))
    for (const auto& [key, art] : stages.at("pretrain-detector").at("artifacts").items())
      artifacts[key] = art.at("path").get<std::string>();
  artifacts[detector_key(tc.variant)] = ckpt;
  artifacts["report_" + variant] = report;
  artifacts["curve_" + variant] = curve;
  manifest.record_stage("pretrain-detector", config_hash(config), artifacts);
  manifest.save();
}

void stage_eval(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const auto dir = out_dir(config);
  auto manifest = RunManifest::load_or_create(dir);
  const auto policies = load_policies(manifest);
  check_policies(config, policies);
  const auto variant = config.detector.variant;
  const auto detector =
      detector_from_json(read_json(manifest.artifact("pretrain-detector", detector_key(variant)), "pretrain-detector"));

  const std::size_t n = config.adversarial.eval_episodes;
  const std::uint64_t seed = config.adversarial.eval_seed;
  const auto pure = evaluate_pair(*policies.pure, *policies.noncheater, detector, config.env, n, seed, config.workers);
  // Reference row: the non-cheater against a second, disjoint batch of itself.
  EnvConfig env = config.env;
  env.seed = seed + n;
  std::vector<DetectorSample> samples;
  for (const auto& ep : collect_rollouts(*policies.noncheater, env, Observability::partial, n, config.workers,
                                         {PlayerLabel::noncheater}))
    if (ep.length > 0) samples.push_back(make_detector_sample(ep));
  env.seed = seed + 2 * n;
  for (const auto& ep : collect_rollouts(*policies.noncheater, env, Observability::partial, n, config.workers,
                                         {PlayerLabel::cheater}))
    if (ep.length > 0) samples.push_back(make_detector_sample(ep));
  const auto null_metrics = evaluate_detector(detector, samples);

  CsvWriter csv({"game", "player", "detector", "ap", "auroc", "avg_reward", "avg_length"});
  const std::string game = to_string(config.env.game);
  csv.row({game, "noncheater", to_string(variant), format_number(null_metrics.ap), format_number(null_metrics.auroc),
           format_number(pure.noncheater_reward), format_number(pure.noncheater_length)});
  csv.row({game, "pure_cheater", to_string(variant), format_number(pure.ap), format_number(pure.auroc),
           format_number(pure.avg_reward), format_number(pure.avg_length)});
  const std::string rel = "reports/eval_" + to_string(variant) + ".csv";
  write_text(dir / rel, csv.str());
  log << csv.str();
  manifest.record_stage("eval", config_hash(config), {{"table_" + to_string(variant), rel}});
  manifest.save();
}

RunMetrics stage_adv_train(const ExperimentConfig& config, const RunSpec& spec, std::ostream& log) {
  config.validate();
  const auto dir = out_dir(config);
  auto manifest = RunManifest::load_or_create(dir);
  const auto policies = load_policies(manifest);
  check_policies(config, policies);
  nn::Adam det_opt;
  const auto detector = detector_from_json(
      read_json(manifest.artifact("pretrain-detector", detector_key(spec.detector)), "pretrain-detector"), &det_opt);
  const auto ref = read_json(manifest.artifact("pretrain", "reference"), "pretrain");

  const auto adv = config.adversarial_config(spec.lambda, spec.seed, spec.mode, spec.cheater);
  const auto noncheater_before = nn::parameter_hash(policies.noncheater->params());
  const auto pure_before = nn::parameter_hash(policies.pure->params());
  const auto result = adversarial_train(policies.noncheater, policies.pure, detector, det_opt, config.env, adv,
                                        [&](const IterationMetrics& m) {
                                          log << "[adv-train " << spec.name() << "] iter " << m.iteration << " reward "
                                              << format_number(m.avg_reward) << " auroc " << format_number(m.auroc)
                                              << " omega " << format_number(m.mean_omega) << "\n";
                                          log.flush();
                                        });

  RunMetrics metrics;
  metrics.spec = spec;
  metrics.final = evaluate_pair(result.cheater(), *policies.noncheater, result.detector, config.env,
                                config.adversarial.eval_episodes, config.adversarial.eval_seed, config.workers);
  const double r_n = ref.at("noncheater_reward").get<double>();
  const double r_p = ref.at("pure_cheater_reward").get<double>();
  if (r_p == r_n) {
    // Undefined; recorded as NaN instead of failing the whole run.
    log << "[adv-train " << spec.name() << "] reference rewards coincide; relative reward is undefined\n";
    metrics.relative_reward = std::numeric_limits<double>::quiet_NaN();
  } else {
    metrics.relative_reward = relative_reward(metrics.final.avg_reward, r_n, r_p);
  }

  const std::string run_dir = "runs/" + spec.name();
  std::map<std::string, std::string> artifacts;
  write_text(dir / run_dir / "history.csv", history_csv(result.history));
  write_text(dir / run_dir / "metrics.csv", metrics_csv({metrics}));
  write_json(dir / run_dir / "detector.json", checkpoint_json(result.detector, &result.detector_optimizer));
  if (result.structured)
    write_json(dir / run_dir / "gating.json", checkpoint_json(result.structured->gating(), &result.cheater_optimizer));
  else
    write_json(dir / run_dir / "cheater.json", checkpoint_json(*result.unstructured, &result.cheater_optimizer));

  OrderedJson run;
  run["name"] = spec.name();
  run["config_hash"] = config_hash(config);
  run["lambda"] = spec.lambda;
  run["seed"] = spec.seed;
  run["detector"] = to_string(spec.detector);
  run["mode"] = to_string(spec.mode);
  run["cheater"] = to_string(spec.cheater);
  run["metrics"] = run_dir + "/metrics.csv";
  run["history"] = run_dir + "/history.csv";
  // Parameter hashes of the pretrained policies before and after training.
  const ActorCritic& nc_after = result.structured ? result.structured->noncheater() : *policies.noncheater;
  const ActorCritic& pure_after = result.structured ? result.structured->pure() : *policies.pure;
  run["frozen_hashes"] = {{"noncheater_before", hex64(noncheater_before)},
                          {"noncheater_after", hex64(nn::parameter_hash(nc_after.params()))},
                          {"pure_before", hex64(pure_before)},
                          {"pure_after", hex64(nn::parameter_hash(pure_after.params()))}};
  manifest.record_run(run);
  manifest.save();
  log << "[adv-train " << spec.name() << "] final AP " << format_number(metrics.final.ap) << " AUROC "
      << format_number(metrics.final.auroc) << " reward " << format_number(metrics.final.avg_reward)
      << " relative " << format_number(metrics.relative_reward) << "\n";
  return metrics;
}

void stage_sweep(const ExperimentConfig& config, std::ostream& log) {
  config.validate();
  const auto& a = config.adversarial;
  std::vector<RunMetrics> rows;
  OrderedJson plan = OrderedJson::array();
  for (auto detector : a.detectors)
    for (auto mode : a.modes)
      for (double lambda : a.lambdas)
        for (auto seed : a.seeds) {
          RunSpec spec{lambda, seed, detector, mode, a.cheater};
          plan.push_back({{"name", spec.name()}, {"lambda", lambda}, {"seed", seed},
                          {"detector", to_string(detector)}, {"mode", to_string(mode)},
                          {"cheater", to_string(a.cheater)}});
        }
  const auto dir = out_dir(config);
  write_text(dir / "sweep" / "plan.json", plan.dump(1) + "\n");
  for (const auto& entry : plan) {
    RunSpec spec{entry.at("lambda").get<double>(), entry.at("seed").get<std::uint64_t>(),
                 parse_detector_variant(entry.at("detector").get<std::string>()),
                 parse_adversarial_mode(entry.at("mode").get<std::string>()), a.cheater};
    rows.push_back(stage_adv_train(config, spec, log));
  }
  write_text(dir / "sweep" / "metrics.csv", metrics_csv(rows));
  auto manifest = RunManifest::load_or_create(dir);
  manifest.record_stage("sweep", config_hash(config), {{"plan", "sweep/plan.json"}, {"metrics", "sweep/metrics.csv"}});
  manifest.save();
  log << "[sweep] " << rows.size() << " runs\n";
}

void stage_report(const ExperimentConfig& config, std::ostream& log) {
  const auto dir = out_dir(config);
  auto manifest = RunManifest::load_or_create(dir);
  if (manifest.runs().empty())
    throw MissingArtifact("no adversarial runs recorded in " + (dir / "manifest.json").string() +
                              "; run 'adv-train' or 'sweep' first",
                          "adv-train");
  std::vector<RunMetrics> rows;
  for (const auto& run : manifest.runs()) {
    const auto path = dir / run.at("metrics").get<std::string>();
    std::ifstream in(path);
    if (!in) throw MissingArtifact(path.string() + " is missing; re-run 'adv-train'", "adv-train");
    std::stringstream ss;
    ss << in.rdbuf();
    for (auto& r : parse_metrics_csv(ss.str())) rows.push_back(r);
  }
  std::sort(rows.begin(), rows.end(), [](const RunMetrics& x, const RunMetrics& y) {
    return std::tuple(static_cast<int>(x.spec.detector), static_cast<int>(x.spec.mode),
                      static_cast<int>(x.spec.cheater), x.spec.lambda, x.spec.seed) <
           std::tuple(static_cast<int>(y.spec.detector), static_cast<int>(y.spec.mode),
                      static_cast<int>(y.spec.cheater), y.spec.lambda, y.spec.seed);
  });
  const auto agg = aggregate(rows);
  write_text(dir / "report" / "runs.csv", metrics_csv(rows));
  write_text(dir / "report" / "aggregate.csv", aggregate_csv(agg));

  // Metric-vs-lambda curves.
  CsvWriter by_lambda({"detector", "mode", "cheater", "lambda", "metric", "mean", "std"});
  for (const auto& a : agg) {
    const std::vector<std::string> key = {to_string(a.detector), to_string(a.mode), to_string(a.cheater),
                                          format_number(a.lambda)};
    auto add = [&](const char* metric, double m, double s) {
      auto row = key;
      row.insert(row.end(), {metric, format_number(m), format_number(s)});
      by_lambda.row(row);
    };
    add("ap", a.ap_mean, a.ap_std);
    add("auroc", a.auroc_mean, a.auroc_std);
    add("reward", a.reward_mean, a.reward_std);
    add("length", a.length_mean, a.length_std);
    add("relative_reward", a.relative_mean, a.relative_std);
  }
  write_text(dir / "report" / "metric_vs_lambda.csv", by_lambda.str());

  // Reward-vs-detectability points, one per run.
  CsvWriter tradeoff({"detector", "mode", "cheater", "lambda", "seed", "ap", "auroc", "relative_reward"});
  for (const auto& r : rows)
    tradeoff.row({to_string(r.spec.detector), to_string(r.spec.mode), to_string(r.spec.cheater),
                  format_number(r.spec.lambda), std::to_string(r.spec.seed), format_number(r.final.ap),
                  format_number(r.final.auroc), format_number(r.relative_reward)});
  write_text(dir / "report" / "reward_vs_detectability.csv", tradeoff.str());

  for (const auto& a : agg) {
    log << to_string(a.detector) << " " << to_string(a.mode) << " " << to_string(a.cheater) << " lambda "
        << format_number(a.lambda) << ": AP " << format_mean_std(a.ap_mean, a.ap_std) << ", AUROC "
        << format_mean_std(a.auroc_mean, a.auroc_std) << ", reward " << format_mean_std(a.reward_mean, a.reward_std)
        << ", relative " << format_mean_std(a.relative_mean, a.relative_std) << "\n";
  }
  manifest.record_stage("report", config_hash(config),
                        {{"runs", "report/runs.csv"},
                         {"aggregate", "report/aggregate.csv"},
                         {"metric_vs_lambda", "report/metric_vs_lambda.csv"},
                         {"reward_vs_detectability", "report/reward_vs_detectability.csv"}});
  manifest.save();
}

}  // namespace espsim
