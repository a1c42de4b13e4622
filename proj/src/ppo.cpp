#include "espsim/ppo.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "espsim/errors.hpp"

namespace espsim {

void TrainConfig::validate() const {
  if (!(clip > 0.0)) throw ConfigError("clip must be positive");
  if (gae_lambda < 0.0 || gae_lambda > 1.0) throw ConfigError("gae_lambda must be in [0, 1]");
  if (vf_coef < 0.0 || ent_coef < 0.0) throw ConfigError("loss coefficients must be non-negative");
  if (epochs < 1 || minibatch_size < 1 || rollout_steps < 1) throw ConfigError("epochs, minibatch and rollout sizes must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (adam_beta1 < 0.0 || adam_beta1 >= 1.0 || adam_beta2 < 0.0 || adam_beta2 >= 1.0)
    throw ConfigError("adam betas must be in [0, 1)");
}

GaeResult gae_advantages(std::span<const double> rewards, std::span<const double> values,
                         std::span<const std::uint8_t> dones, double gae_lambda) {
  const std::size_t n = rewards.size();
  if (values.size() != n || dones.size() != n) throw ConfigError("gae inputs must be aligned");
  GaeResult out;
  out.advantages.assign(n, 0.0);
  out.returns.assign(n, 0.0);
  double next_advantage = 0.0;
  for (std::size_t i = n; i-- > 0;) {
    const double live = dones[i] ? 0.0 : 1.0;
    const double next_value = i + 1 < n ? values[i + 1] : 0.0;
    const double delta = rewards[i] + next_value * live - values[i];
    next_advantage = delta + gae_lambda * live * next_advantage;
    out.advantages[i] = next_advantage;
    out.returns[i] = next_advantage + values[i];
  }
  return out;
}

RolloutBatch make_rollout_batch(std::span<const EpisodeRecord> episodes,
                                std::span<const std::vector<double>> rewards, double gae_lambda) {
  if (!rewards.empty() && rewards.size() != episodes.size())
    throw ConfigError("reward override must cover every episode");
  RolloutBatch batch;
  std::size_t total = 0;
  for (const auto& ep : episodes) {
    if (!ep.trace) throw ConfigError("episodes need a policy trace to build a rollout batch");
    if (batch.width == 0) batch.width = ep.trace->width;
    if (ep.trace->width != batch.width) throw ConfigError("mixed input widths in rollout batch");
    total += ep.length;
  }
  batch.inputs.resize(static_cast<Eigen::Index>(batch.width), static_cast<Eigen::Index>(total));
  std::size_t col = 0;
  for (std::size_t e = 0; e < episodes.size(); ++e) {
    const auto& ep = episodes[e];
    const auto& r = rewards.empty() ? ep.rewards : rewards[e];
    if (r.size() != ep.length) throw ConfigError("reward sequence length does not match the episode");
    std::vector<std::uint8_t> dones(ep.length, 0);
    if (!dones.empty()) dones.back() = 1;  // complete episodes; truncation is treated as terminal
    const auto gae = gae_advantages(r, ep.trace->values, dones, gae_lambda);
    for (std::size_t t = 0; t < ep.length; ++t, ++col) {
      batch.inputs.col(static_cast<Eigen::Index>(col)) =
          Eigen::Map<const nn::Vector>(ep.trace->inputs.data() + t * batch.width, static_cast<Eigen::Index>(batch.width));
      batch.actions.push_back(ep.actions[t]);
      batch.old_log_probs.push_back(ep.trace->log_probs[t]);
      batch.old_values.push_back(ep.trace->values[t]);
      batch.rewards.push_back(r[t]);
      batch.dones.push_back(dones[t]);
      batch.advantages.push_back(gae.advantages[t]);
      batch.returns.push_back(gae.returns[t]);
    }
  }
  return batch;
}

SurrogateTerm clipped_surrogate(double log_prob, double old_log_prob, double advantage, double clip) {
  const double ratio = std::exp(log_prob - old_log_prob);
  const double unclipped = ratio * advantage;
  const double clipped_ratio = std::clamp(ratio, 1.0 - clip, 1.0 + clip);
  const double clipped = clipped_ratio * advantage;
  SurrogateTerm term;
  term.clipped = std::abs(ratio - 1.0) > clip;
  if (unclipped <= clipped) {
    term.objective = unclipped;
    term.d_log_prob = unclipped;
  } else {
    term.objective = clipped;
    term.d_log_prob = 0.0;
  }
  return term;
}

LossParts ActorCriticObjective::loss_and_grad(const RolloutBatch& batch, std::span<const std::size_t> index,
                                              std::span<const double> advantages, const TrainConfig& config,
                                              std::span<double> grad) const {
  const auto n = static_cast<Eigen::Index>(index.size());
  const int n_actions = model_.num_actions();
  nn::Matrix x(static_cast<Eigen::Index>(batch.width), n);
  for (Eigen::Index j = 0; j < n; ++j) x.col(j) = batch.inputs.col(static_cast<Eigen::Index>(index[static_cast<std::size_t>(j)]));

  const auto actor_n = model_.actor().num_params();
  auto params = std::as_const(model_).params();
  nn::Mlp::Tape actor_tape, critic_tape;
  const nn::Matrix& logits = model_.actor().forward_batch(params.subspan(0, actor_n), x, actor_tape);
  const nn::Matrix& values = model_.critic().forward_batch(params.subspan(actor_n), x, critic_tape);

  nn::Matrix d_logits(n_actions, n);
  nn::Matrix d_values(1, n);
  LossParts parts;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> p(static_cast<std::size_t>(n_actions)), logp(static_cast<std::size_t>(n_actions));
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t i = index[static_cast<std::size_t>(j)];
    const double mx = logits.col(j).maxCoeff();
    double sum = 0.0;
    for (int a = 0; a < n_actions; ++a) sum += std::exp(logits(a, j) - mx);
    const double lse = mx + std::log(sum);
    double entropy = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      logp[ua] = logits(a, j) - lse;
      p[ua] = std::exp(logp[ua]);
      entropy -= p[ua] * logp[ua];
    }
    const int act = batch.actions[i];
    const auto term = clipped_surrogate(logp[static_cast<std::size_t>(act)], batch.old_log_probs[i], advantages[i], config.clip);
    const double v_err = values(0, j) - batch.returns[i];

    parts.policy -= term.objective * inv_n;
    parts.value += v_err * v_err * inv_n;
    parts.entropy += entropy * inv_n;
    parts.clip_fraction += (term.clipped ? 1.0 : 0.0) * inv_n;

    // dL/dz = -dobj/dlogp (e_a - p) + ent_coef p (log p + H)
    for (int a = 0; a < n_actions; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      const double indicator = a == act ? 1.0 : 0.0;
      d_logits(a, j) = (-term.d_log_prob * (indicator - p[ua]) + config.ent_coef * p[ua] * (logp[ua] + entropy)) * inv_n;
    }
    d_values(0, j) = 2.0 * config.vf_coef * v_err * inv_n;
  }
  parts.total = parts.policy + config.vf_coef * parts.value - config.ent_coef * parts.entropy;

  model_.actor().backward_batch(params.subspan(0, actor_n), actor_tape, d_logits, grad.subspan(0, actor_n));
  model_.critic().backward_batch(params.subspan(actor_n), critic_tape, d_values, grad.subspan(actor_n));
  return parts;
}

LossParts ppo_update(PpoObjective& objective, nn::Adam& optimizer, RolloutBatch& batch, const TrainConfig& config,
                     Rng& rng) {
  const std::size_t n = batch.size();
  LossParts mean;
  if (n == 0) return mean;
  objective.prepare(batch);

  std::vector<double> adv = batch.advantages;
  if (config.normalize_advantages && n > 1) {
    const double mu = std::accumulate(adv.begin(), adv.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double a : adv) var += (a - mu) * (a - mu);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (double& a : adv) a = (a - mu) / (sd + 1e-8);
  }

  auto params = objective.trainable_params();
  nn::ParamVector grad(params.size());
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto mb = static_cast<std::size_t>(config.minibatch_size);
  std::size_t count = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (std::size_t start = 0; start < n; start += mb) {
      const std::size_t stop = std::min(n, start + mb);
      std::fill(grad.begin(), grad.end(), 0.0);
      const auto parts = objective.loss_and_grad(batch, std::span(order).subspan(start, stop - start), adv, config, grad);
      if (!std::isfinite(parts.total) || !nn::all_finite(grad)) {
        throw NumericError("non-finite PPO loss (policy " + std::to_string(parts.policy) + ", value " +
                           std::to_string(parts.value) + ", entropy " + std::to_string(parts.entropy) + ")");
      }
      nn::clip_grad_norm(grad, config.max_grad_norm);
      optimizer.step(params, grad);
      mean.total += parts.total;
      mean.policy += parts.policy;
      mean.value += parts.value;
      mean.entropy += parts.entropy;
      mean.clip_fraction += parts.clip_fraction;
      ++count;
    }
  }
  const double inv = 1.0 / static_cast<double>(count);
  mean.total *= inv;
  mean.policy *= inv;
  mean.value *= inv;
  mean.entropy *= inv;
  mean.clip_fraction *= inv;
  return mean;
}

EvalSummary evaluate_policy(const Policy& policy, const EnvConfig& env, Observability mode, std::size_t n_episodes,
                            std::uint64_t seed) {
  EvalSummary out;
  for (std::size_t i = 0; i < n_episodes; ++i) {
    const auto ep = run_episode(policy, env, mode, seed + i);
    out.avg_reward += ep.total_return;
    out.avg_length += static_cast<double>(ep.length);
  }
  out.episodes = n_episodes;
  if (n_episodes > 0) {
    out.avg_reward /= static_cast<double>(n_episodes);
    out.avg_length /= static_cast<double>(n_episodes);
  }
  return out;
}

PretrainResult pretrain_policy(const EnvConfig& env, Observability mode, const TrainConfig& config,
                               const PretrainOptions& options) {
  config.validate();
  env.validate();
  Rng rng(derive_seed(options.seed, 0x7072));
  PolicyArchitecture arch{static_cast<int>(input_width(env, mode)), num_actions(env.game), config.hidden};
  ActorCritic model(arch);
  model.init(rng);
  nn::Adam adam(model.params().size(), config.adam());
  ActorCriticObjective objective(model);

  PretrainResult result;
  auto evaluate = [&](std::size_t step, const LossParts& losses) {
    const auto summary = evaluate_policy(model, env, mode, options.eval_episodes, options.eval_seed);
    CurvePoint point{step, summary.avg_reward, summary.avg_length, losses};
    result.curve.push_back(point);
    if (options.on_eval) options.on_eval(point);
    if (result.curve.size() == 1 || summary.avg_reward > result.best_reward) {
      result.best_reward = summary.avg_reward;
      result.best_step = step;
      result.model = model;
    }
  };
  evaluate(0, {});

  RecordOptions record;
  record.keep_trace = true;
  std::size_t steps = 0;
  std::size_t updates = 0;
  std::uint64_t episode_seed = derive_seed(options.seed, 0x747261696e) & 0xffffffffffffULL;
  LossParts last;
  while (steps < options.budget_steps) {
    std::vector<EpisodeRecord> episodes;
    std::size_t collected = 0;
    while (collected < static_cast<std::size_t>(config.rollout_steps)) {
      EnvConfig chunk_env = env;
      chunk_env.seed = episode_seed;
      auto chunk = collect_rollouts(model, chunk_env, mode, options.episodes_per_chunk, 1, record);
      episode_seed += options.episodes_per_chunk;
      for (auto& ep : chunk) {
        collected += ep.length;
        if (ep.length > 0) episodes.push_back(std::move(ep));
      }
    }
    auto batch = make_rollout_batch(episodes, {}, config.gae_lambda);
    last = ppo_update(objective, adam, batch, config, rng);
    steps += collected;
    ++updates;
    if (updates % options.eval_every_updates == 0 || steps >= options.budget_steps) evaluate(steps, last);
  }
  return result;
}

}  // namespace espsim
