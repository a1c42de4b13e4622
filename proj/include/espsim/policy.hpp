#pragma once

#include <span>
#include <vector>

#include "espsim/env.hpp"
#include "espsim/nn.hpp"

namespace espsim {

struct PolicyArchitecture {
  int input_width = 0;
  int num_actions = 0;
  std::vector<int> hidden = {64, 64};

  friend bool operator==(const PolicyArchitecture&, const PolicyArchitecture&) = default;
};

// Separate actor and critic towers over the same flat observation. The
// parameter vector is the actor's parameters followed by the critic's.
class ActorCritic final : public Policy {
 public:
  ActorCritic() = default;
  explicit ActorCritic(PolicyArchitecture arch);

  // Orthogonal init: hidden gain sqrt(2), policy head 0.01, value head 1.
  void init(Rng& rng);

  const PolicyArchitecture& architecture() const { return arch_; }
  const nn::Mlp& actor() const { return actor_; }
  const nn::Mlp& critic() const { return critic_; }

  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }
  std::span<const double> actor_params() const { return std::span(params_).subspan(0, actor_.num_params()); }
  std::span<const double> critic_params() const { return std::span(params_).subspan(actor_.num_params()); }

  std::size_t input_width() const override { return static_cast<std::size_t>(arch_.input_width); }
  int num_actions() const override { return arch_.num_actions; }
  double evaluate(std::span<const double> input, std::span<double> probs) const override;

 private:
  PolicyArchitecture arch_;
  nn::Mlp actor_;
  nn::Mlp critic_;
  nn::ParamVector params_;
};

}  // namespace espsim
