#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "espsim/blackjack.hpp"
#include "espsim/gridworld.hpp"
#include "espsim/types.hpp"

namespace espsim {

struct EnvConfig {
  // Undiscounted returns throughout; not configurable.
  static constexpr double discount = 1.0;

  Game game = Game::blackjack;
  std::uint64_t seed = 0;  // base seed for collections; episode i uses seed + i
  GridConfig grid = GridConfig::desk();
  BlackjackConfig blackjack;

  void validate() const;
};

using GameState = std::variant<GridworldState, BlackjackState>;
using ObservationBundle = std::variant<GridObservation, BlackjackObservation>;

// Anything that maps a flat observation to an action distribution and a
// value estimate. Implementations must be safe to call concurrently.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual std::size_t input_width() const = 0;
  virtual int num_actions() const = 0;
  // Writes action probabilities into `probs` and returns the state value.
  virtual double evaluate(std::span<const double> input, std::span<double> probs) const = 0;
};

// What the acting policy saw and did, kept for on-policy updates.
struct PolicyTrace {
  std::size_t width = 0;
  std::vector<double> inputs;  // length x width, row per step
  std::vector<double> log_probs;
  std::vector<double> values;
};

struct EpisodeRecord {
  Game env = Game::blackjack;
  PlayerLabel label = PlayerLabel::noncheater;
  std::uint64_t seed = 0;
  std::vector<GameState> states;  // state before each action
  std::vector<int> actions;
  std::vector<double> rewards;
  std::vector<ObservationBundle> noncheater_obs;  // empty unless requested
  GameState final_state;
  std::size_t length = 0;
  double total_return = 0.0;
  bool terminated = false;
  bool truncated = false;
  std::optional<PolicyTrace> trace;
};

struct RecordOptions {
  PlayerLabel label = PlayerLabel::noncheater;
  bool keep_observations = false;
  bool keep_trace = false;
};

// A stateful episode driver over one of the games.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual Game game() const = 0;
  virtual int num_actions() const = 0;
  virtual int max_length() const = 0;
  virtual std::size_t input_width(Observability mode) const = 0;
  virtual std::size_t detector_width() const = 0;

  virtual void reset(std::uint64_t seed) = 0;
  // Reward, terminated, truncated for the applied action.
  virtual StepOutcome<std::monostate> step(int action) = 0;
  virtual bool done() const = 0;
  virtual GameState state() const = 0;
  virtual ObservationBundle observe(Observability mode) const = 0;
  virtual void write_input(Observability mode, std::span<double> out) const = 0;
};

std::unique_ptr<Environment> make_environment(const EnvConfig& config);

std::size_t input_width(const EnvConfig& config, Observability mode);
std::size_t detector_width(const EnvConfig& config);
int num_actions(Game game);

// Label-blind detector input for a recorded episode.
std::vector<double> encode_detector(const EpisodeRecord& episode);

// Plays one episode. Policy sampling and env randomness are both derived
// from `seed`, so the result is a pure function of its arguments.
EpisodeRecord run_episode(const Policy& policy, const EnvConfig& env, Observability mode, std::uint64_t seed,
                          const RecordOptions& options = {});

// n_episodes episodes with seeds env.seed + i, sorted by seed.
std::vector<EpisodeRecord> collect_rollouts(const Policy& policy, const EnvConfig& env, Observability mode,
                                            std::size_t n_episodes, std::size_t workers = 1,
                                            const RecordOptions& options = {});

// Fixed-distribution policy, handy for tests and baselines.
class ConstantPolicy final : public Policy {
 public:
  ConstantPolicy(std::size_t width, std::vector<double> probs) : width_(width), probs_(std::move(probs)) {}
  std::size_t input_width() const override { return width_; }
  int num_actions() const override { return static_cast<int>(probs_.size()); }
  double evaluate(std::span<const double>, std::span<double> probs) const override;

 private:
  std::size_t width_;
  std::vector<double> probs_;
};

}  // namespace espsim
