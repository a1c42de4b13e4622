#include "espsim/policy.hpp"

#include <cmath>

#include "espsim/errors.hpp"

namespace espsim {

namespace {

std::vector<int> tower(int in, const std::vector<int>& hidden, int out) {
  std::vector<int> sizes{in};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(out);
  return sizes;
}

}  // namespace

ActorCritic::ActorCritic(PolicyArchitecture arch)
    : arch_(std::move(arch)),
      actor_(tower(arch_.input_width, arch_.hidden, arch_.num_actions)),
      critic_(tower(arch_.input_width, arch_.hidden, 1)),
      params_(actor_.num_params() + critic_.num_params(), 0.0) {}

void ActorCritic::init(Rng& rng) {
  std::span<double> all(params_);
  actor_.init(all.subspan(0, actor_.num_params()), rng, std::sqrt(2.0), 0.01);
  critic_.init(all.subspan(actor_.num_params()), rng, std::sqrt(2.0), 1.0);
}

double ActorCritic::evaluate(std::span<const double> input, std::span<double> probs) const {
  if (input.size() != input_width()) throw ConfigError("observation width does not match the policy input");
  std::vector<double> logits(static_cast<std::size_t>(arch_.num_actions));
  actor_.forward(actor_params(), input, logits);
  nn::softmax(logits, probs);
  double value = 0.0;
  critic_.forward(critic_params(), input, std::span(&value, 1));
  return value;
}

}  // namespace espsim
