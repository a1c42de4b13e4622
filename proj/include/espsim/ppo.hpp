#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "espsim/env.hpp"
#include "espsim/nn.hpp"
#include "espsim/policy.hpp"

namespace espsim {

struct TrainConfig {
  double gae_lambda = 0.95;
  double clip = 0.2;
  double vf_coef = 0.5;
  double ent_coef = 0.01;
  int epochs = 4;
  int minibatch_size = 256;
  double learning_rate = 3e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  int rollout_steps = 4096;  // transitions per update (whole episodes)
  double max_grad_norm = 0.5;  // <= 0 disables clipping
  bool normalize_advantages = true;
  std::vector<int> hidden = {64, 64};

  void validate() const;
  nn::AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, 1e-8}; }
};

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> returns;
};

// Undiscounted GAE. `dones[t]` cuts the recursion after step t; values past
// the end of the sequence count as 0.
GaeResult gae_advantages(std::span<const double> rewards, std::span<const double> values,
                         std::span<const std::uint8_t> dones, double gae_lambda);

// Flattened on-policy samples, one column per transition.
struct RolloutBatch {
  std::size_t width = 0;
  nn::Matrix inputs;
  std::vector<int> actions;
  std::vector<double> old_log_probs;
  std::vector<double> old_values;
  std::vector<double> rewards;
  std::vector<std::uint8_t> dones;
  std::vector<double> advantages;
  std::vector<double> returns;

  // Frozen-model outputs some objectives precompute once per batch.
  nn::Matrix aux_probs_a;
  nn::Matrix aux_probs_b;
  std::vector<double> aux_values;

  std::size_t size() const { return actions.size(); }
};

// Episodes must carry a PolicyTrace. `rewards` overrides the recorded
// rewards per episode (e.g. shaped rewards) when non-empty.
RolloutBatch make_rollout_batch(std::span<const EpisodeRecord> episodes,
                                std::span<const std::vector<double>> rewards, double gae_lambda);

struct LossParts {
  double total = 0.0;
  double policy = 0.0;   // -clipped surrogate
  double value = 0.0;    // (V - target)^2
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

// Something PPO can optimise: a parameter vector and the mean minibatch loss
//   -min(rho A, clip(rho) A) + vf_coef (V - target)^2 - ent_coef H
// with its gradient.
class PpoObjective {
 public:
  virtual ~PpoObjective() = default;
  virtual std::span<double> trainable_params() = 0;
  virtual void prepare(RolloutBatch&) const {}
  // Mean loss over the columns in `index`, gradient accumulated into `grad`.
  virtual LossParts loss_and_grad(const RolloutBatch& batch, std::span<const std::size_t> index,
                                  std::span<const double> advantages, const TrainConfig& config,
                                  std::span<double> grad) const = 0;
};

class ActorCriticObjective final : public PpoObjective {
 public:
  explicit ActorCriticObjective(ActorCritic& model) : model_(model) {}
  std::span<double> trainable_params() override { return model_.params(); }
  LossParts loss_and_grad(const RolloutBatch& batch, std::span<const std::size_t> index,
                          std::span<const double> advantages, const TrainConfig& config,
                          std::span<double> grad) const override;

 private:
  ActorCritic& model_;
};

// Per-sample surrogate pieces shared by every objective.
struct SurrogateTerm {
  double objective = 0.0;    // min(rho A, clip(rho) A)
  double d_log_prob = 0.0;   // d objective / d log pi(a)
  bool clipped = false;
};
SurrogateTerm clipped_surrogate(double log_prob, double old_log_prob, double advantage, double clip);

// Runs `epochs` passes of shuffled minibatches with Adam. Throws
// NumericError on a non-finite loss or gradient.
LossParts ppo_update(PpoObjective& objective, nn::Adam& optimizer, RolloutBatch& batch, const TrainConfig& config,
                     Rng& rng);

struct EvalSummary {
  double avg_reward = 0.0;
  double avg_length = 0.0;
  std::size_t episodes = 0;
};

EvalSummary evaluate_policy(const Policy& policy, const EnvConfig& env, Observability mode, std::size_t n_episodes,
                            std::uint64_t seed);

struct CurvePoint {
  std::size_t step = 0;
  double reward = 0.0;
  double length = 0.0;
  LossParts losses;
};

struct PretrainOptions {
  std::size_t budget_steps = 1'000'000;
  std::size_t episodes_per_chunk = 64;
  std::size_t eval_every_updates = 10;
  std::size_t eval_episodes = 1000;
  std::uint64_t eval_seed = 900'000'000;
  std::uint64_t seed = 0;
  std::function<void(const CurvePoint&)> on_eval;
};

struct PretrainResult {
  ActorCritic model;  // best evaluation checkpoint
  double best_reward = 0.0;
  std::size_t best_step = 0;
  std::vector<CurvePoint> curve;
};

// Collect/update loop for `budget_steps` transitions, keeping the checkpoint
// with the highest reward on the fixed evaluation seeds.
PretrainResult pretrain_policy(const EnvConfig& env, Observability mode, const TrainConfig& config,
                               const PretrainOptions& options);

}  // namespace espsim
