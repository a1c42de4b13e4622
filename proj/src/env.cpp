#include "espsim/env.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "espsim/errors.hpp"
#include "espsim/rng.hpp"

namespace espsim {

std::string to_string(Game game) { return game == Game::gridworld ? "gridworld" : "blackjack"; }
std::string to_string(Observability mode) { return mode == Observability::partial ? "partial" : "full"; }
std::string to_string(PlayerLabel label) { return label == PlayerLabel::cheater ? "cheater" : "noncheater"; }

Game parse_game(std::string_view text) {
  if (text == "gridworld") return Game::gridworld;
  if (text == "blackjack") return Game::blackjack;
  throw ConfigError("unknown game '" + std::string(text) + "'");
}

Observability parse_observability(std::string_view text) {
  if (text == "partial") return Observability::partial;
  if (text == "full") return Observability::full;
  throw ConfigError("unknown observability '" + std::string(text) + "'");
}

void EnvConfig::validate() const {
  if (game == Game::gridworld) grid.validate();
  else blackjack.validate();
}

namespace {

class GridworldEnv final : public Environment {
 public:
  explicit GridworldEnv(const GridConfig& config) : config_(config) { config_.validate(); }
  Game game() const override { return Game::gridworld; }
  int num_actions() const override { return kGridActions; }
  int max_length() const override { return config_.max_len; }
  std::size_t input_width(Observability mode) const override { return grid_input_width(config_, mode); }
  std::size_t detector_width() const override {
    return static_cast<std::size_t>(2 * config_.grid_size * config_.grid_size);
  }
  void reset(std::uint64_t seed) override { state_ = grid_reset(config_, seed); }
  StepOutcome<std::monostate> step(int action) override {
    if (action < 0 || action >= kGridActions) throw ConfigError("gridworld action out of range");
    auto out = grid_step(state_, static_cast<GridAction>(action));
    state_ = std::move(out.next_state);
    return {{}, out.reward, out.terminated, out.truncated};
  }
  bool done() const override { return state_.finished(); }
  GameState state() const override { return state_; }
  ObservationBundle observe(Observability mode) const override { return grid_observe(state_, mode); }
  void write_input(Observability mode, std::span<double> out) const override { grid_write_input(state_, mode, out); }

 private:
  GridConfig config_;
  GridworldState state_;
};

class BlackjackEnv final : public Environment {
 public:
  explicit BlackjackEnv(const BlackjackConfig& config) : config_(config) { config_.validate(); }
  Game game() const override { return Game::blackjack; }
  int num_actions() const override { return kBlackjackActions; }
  int max_length() const override { return config_.max_len; }
  std::size_t input_width(Observability mode) const override { return bj_input_width(config_, mode); }
  std::size_t detector_width() const override { return bj_bundle_width(config_); }
  void reset(std::uint64_t seed) override {
    state_ = bj_reset(config_, seed);
    steps_ = 0;
  }
  StepOutcome<std::monostate> step(int action) override {
    if (action < 0 || action >= kBlackjackActions) throw ConfigError("blackjack action out of range");
    if (done()) throw ContractViolation("step called on a finished blackjack episode");
    auto out = bj_step(state_, static_cast<BlackjackAction>(action));
    state_ = std::move(out.next_state);
    ++steps_;
    const bool truncated = !out.terminated && steps_ >= config_.max_len;
    return {{}, out.reward, out.terminated, truncated};
  }
  bool done() const override { return state_.phase == Phase::settled || steps_ >= config_.max_len; }
  GameState state() const override { return state_; }
  ObservationBundle observe(Observability mode) const override { return bj_observe(state_, mode); }
  void write_input(Observability mode, std::span<double> out) const override { bj_write_input(state_, mode, out); }

 private:
  BlackjackConfig config_;
  BlackjackState state_;
  int steps_ = 0;
};

int sample_action(std::span<const double> probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last_positive = 0;
  for (std::size_t a = 0; a < probs.size(); ++a) {
    if (probs[a] <= 0.0) continue;
    acc += probs[a];
    last_positive = static_cast<int>(a);
    if (u < acc) return static_cast<int>(a);
  }
  return last_positive;
}

}  // namespace

std::unique_ptr<Environment> make_environment(const EnvConfig& config) {
  if (config.game == Game::gridworld) return std::make_unique<GridworldEnv>(config.grid);
  return std::make_unique<BlackjackEnv>(config.blackjack);
}

std::size_t input_width(const EnvConfig& config, Observability mode) {
  return config.game == Game::gridworld ? grid_input_width(config.grid, mode) : bj_input_width(config.blackjack, mode);
}

std::size_t detector_width(const EnvConfig& config) {
  return config.game == Game::gridworld ? static_cast<std::size_t>(2 * config.grid.grid_size * config.grid.grid_size)
                                        : bj_bundle_width(config.blackjack);
}

int num_actions(Game game) { return game == Game::gridworld ? kGridActions : kBlackjackActions; }

std::vector<double> encode_detector(const EpisodeRecord& episode) {
  if (episode.states.empty()) throw ContractViolation("cannot encode an empty episode");
  if (episode.env == Game::gridworld) {
    return grid_encode_detector(std::get<GridworldState>(episode.states.front()),
                                std::get<GridworldState>(episode.final_state))
        .flatten();
  }
  std::vector<BlackjackAction> actions;
  actions.reserve(episode.actions.size());
  for (int a : episode.actions) actions.push_back(static_cast<BlackjackAction>(a));
  return bj_encode_detector(std::get<BlackjackState>(episode.states.front()), actions);
}

double ConstantPolicy::evaluate(std::span<const double>, std::span<double> probs) const {
  std::copy(probs_.begin(), probs_.end(), probs.begin());
  return 0.0;
}

EpisodeRecord run_episode(const Policy& policy, const EnvConfig& config, Observability mode, std::uint64_t seed,
                          const RecordOptions& options) {
  auto env = make_environment(config);
  const std::size_t width = env->input_width(mode);
  if (policy.input_width() != width) {
    throw ConfigError("policy expects " + std::to_string(policy.input_width()) + " inputs but " + to_string(config.game) +
                      " in " + to_string(mode) + " mode provides " + std::to_string(width));
  }
  if (policy.num_actions() != env->num_actions()) throw ConfigError("policy action count does not match the game");

  EpisodeRecord rec;
  rec.env = config.game;
  rec.label = options.label;
  rec.seed = seed;
  if (options.keep_trace) rec.trace.emplace().width = width;

  env->reset(seed);
  Rng rng(derive_seed(seed, 0x706f6c));
  std::vector<double> input(width);
  std::vector<double> probs(static_cast<std::size_t>(env->num_actions()));

  while (!env->done()) {
    rec.states.push_back(env->state());
    if (options.keep_observations) rec.noncheater_obs.push_back(env->observe(Observability::partial));
    env->write_input(mode, input);
    const double value = policy.evaluate(input, probs);
    const int action = sample_action(probs, rng);
    if (rec.trace) {
      rec.trace->inputs.insert(rec.trace->inputs.end(), input.begin(), input.end());
      rec.trace->log_probs.push_back(std::log(std::max(probs[static_cast<std::size_t>(action)], 1e-300)));
      rec.trace->values.push_back(value);
    }
    const auto out = env->step(action);
    rec.actions.push_back(action);
    rec.rewards.push_back(out.reward);
    rec.total_return += out.reward;
    rec.terminated = out.terminated;
    rec.truncated = out.truncated;
  }
  // A state that is terminal at reset (e.g. no items to collect) yields a
  // zero-length episode.
  if (rec.states.empty()) rec.terminated = true;
  rec.final_state = env->state();
  rec.length = rec.actions.size();
  return rec;
}

std::vector<EpisodeRecord> collect_rollouts(const Policy& policy, const EnvConfig& env, Observability mode,
                                            std::size_t n_episodes, std::size_t workers,
                                            const RecordOptions& options) {
  if (n_episodes < 1) throw ConfigError("collect_rollouts needs at least one episode");
  if (workers < 1) throw ConfigError("collect_rollouts needs at least one worker");
  std::vector<EpisodeRecord> out(n_episodes);
  auto run_range = [&](std::size_t begin, std::size_t stride) {
    for (std::size_t i = begin; i < n_episodes; i += stride)
      out[i] = run_episode(policy, env, mode, env.seed + i, options);
  };
  workers = std::min(workers, n_episodes);
  if (workers == 1) {
    run_range(0, 1);
  } else {
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          run_range(w, workers);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.seed < b.seed; });
  return out;
}

}  // namespace espsim
