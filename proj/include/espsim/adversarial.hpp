#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "espsim/detector.hpp"
#include "espsim/policy.hpp"
#include "espsim/ppo.hpp"

namespace espsim {

// (1 - omega) pi_n + omega pi_p, elementwise. Throws ConfigError for omega
// outside [0, 1] or mismatched sizes.
std::vector<double> interpolate(std::span<const double> pi_n, std::span<const double> pi_p, double omega);

// Adds lambda log(1 - D) to the last reward, with D clamped first.
std::vector<double> shape_rewards(std::span<const double> rewards, double detector_score, double lambda);

// (r - r_n) / (r_p - r_n); throws when r_p == r_n.
double relative_reward(double r, double r_noncheater, double r_pure);

enum class AdversarialMode { joint, cheater_only };
enum class CheaterArch { structured, unstructured };

std::string to_string(AdversarialMode mode);
std::string to_string(CheaterArch arch);
AdversarialMode parse_adversarial_mode(const std::string& name);
CheaterArch parse_cheater_arch(const std::string& name);

// Trainable part of the structured cheater: one MLP over the cheater's full
// input with two outputs, the gate logit (omega = sigmoid) and V_d.
class GatingModel {
 public:
  GatingModel() = default;
  GatingModel(std::size_t input_width, std::vector<int> hidden);

  // Small output weights: omega starts near 0.5 and V_d near 0.
  void init(Rng& rng);

  std::size_t input_width() const { return static_cast<std::size_t>(net_.input_width()); }
  const std::vector<int>& hidden() const { return hidden_; }
  const nn::Mlp& network() const { return net_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  // Returns {omega, V_d}.
  std::pair<double, double> forward(std::span<const double> input) const;

 private:
  std::vector<int> hidden_;
  nn::Mlp net_;
  nn::ParamVector params_;
};

// pi_c = (1 - omega) pi_n + omega pi_p and V_c = V_p + V_d. pi_n reads the
// partial-observation suffix of the full input.
class GatedCheater final : public Policy {
 public:
  GatedCheater(std::shared_ptr<const ActorCritic> noncheater, std::shared_ptr<const ActorCritic> pure,
               GatingModel gating);

  const ActorCritic& noncheater() const { return *noncheater_; }
  const ActorCritic& pure() const { return *pure_; }
  const GatingModel& gating() const { return gating_; }
  GatingModel& gating() { return gating_; }
  std::size_t partial_offset() const { return pure_->input_width() - noncheater_->input_width(); }

  double omega(std::span<const double> input) const;

  std::size_t input_width() const override { return pure_->input_width(); }
  int num_actions() const override { return pure_->num_actions(); }
  double evaluate(std::span<const double> input, std::span<double> probs) const override;

 private:
  std::shared_ptr<const ActorCritic> noncheater_;
  std::shared_ptr<const ActorCritic> pure_;
  GatingModel gating_;
};

// PPO objective over the gating parameters only. prepare() caches the frozen
// pi_n, pi_p and V_p outputs in the batch's aux fields.
class GatedObjective final : public PpoObjective {
 public:
  explicit GatedObjective(GatedCheater& model) : model_(model) {}
  std::span<double> trainable_params() override { return model_.gating().params(); }
  void prepare(RolloutBatch& batch) const override;
  LossParts loss_and_grad(const RolloutBatch& batch, std::span<const std::size_t> index,
                          std::span<const double> advantages, const TrainConfig& config,
                          std::span<double> grad) const override;

 private:
  GatedCheater& model_;
};

struct AdversarialConfig {
  double lambda = 0.1;
  AdversarialMode mode = AdversarialMode::joint;
  CheaterArch cheater_arch = CheaterArch::structured;
  int iterations = 100;
  std::size_t episodes_per_iteration = 1024;  // per policy
  int detector_passes = 1;                    // BCE passes per cheater update
  std::size_t detector_batch_size = 8;
  double detector_learning_rate = 3e-4;
  TrainConfig ppo;
  std::vector<int> gating_hidden = {64, 64};
  std::uint64_t seed = 0;
  std::size_t workers = 1;

  void validate() const;
};

struct IterationMetrics {
  int iteration = 0;
  double avg_reward = 0.0;  // unshaped cheater return on the fresh batch
  double avg_length = 0.0;
  double avg_shaped_return = 0.0;
  double mean_score = 0.0;  // D on cheater episodes
  double mean_omega = 0.0;  // structured only
  double ap = 0.0;          // current detector on the fresh batch
  double auroc = 0.0;
  double detector_loss = 0.0;
  LossParts ppo;
};

struct AdversarialResult {
  // Exactly one of these is set, according to the cheater architecture.
  std::unique_ptr<GatedCheater> structured;
  std::unique_ptr<ActorCritic> unstructured;
  Detector detector;
  nn::Adam cheater_optimizer;
  nn::Adam detector_optimizer;
  std::vector<IterationMetrics> history;

  const Policy& cheater() const;
};

// Alternating cheater / detector training. Throws NumericError on divergence.
AdversarialResult adversarial_train(std::shared_ptr<const ActorCritic> noncheater,
                                    std::shared_ptr<const ActorCritic> pure, const Detector& detector,
                                    const nn::Adam& detector_optimizer, const EnvConfig& env,
                                    const AdversarialConfig& config,
                                    const std::function<void(const IterationMetrics&)>& on_iteration = {});

struct FinalMetrics {
  double ap = 0.0;
  double auroc = 0.0;
  double avg_reward = 0.0;  // cheater
  double avg_length = 0.0;
  double noncheater_reward = 0.0;
  double noncheater_length = 0.0;
};

// Plays n episodes of each policy on seeds starting at `seed` and scores them
// with the detector.
FinalMetrics evaluate_pair(const Policy& cheater, const Policy& noncheater, const Detector& detector,
                           const EnvConfig& env, std::size_t n_episodes, std::uint64_t seed,
                           std::size_t workers = 1);

}  // namespace espsim
