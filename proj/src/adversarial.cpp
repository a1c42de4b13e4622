#include "espsim/adversarial.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "espsim/errors.hpp"
#include "espsim/metrics.hpp"

namespace espsim {

std::vector<double> interpolate(std::span<const double> pi_n, std::span<const double> pi_p, double omega) {
  if (!(omega >= 0.0 && omega <= 1.0)) throw ConfigError("interpolation weight must lie in [0, 1]");
  if (pi_n.size() != pi_p.size()) throw ConfigError("interpolated distributions must have the same size");
  std::vector<double> out(pi_n.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (1.0 - omega) * pi_n[i] + omega * pi_p[i];
  return out;
}

std::vector<double> shape_rewards(std::span<const double> rewards, double detector_score, double lambda) {
  if (rewards.empty()) throw ConfigError("cannot shape the rewards of an empty episode");
  if (lambda < 0.0) throw ConfigError("lambda must be non-negative");
  std::vector<double> out(rewards.begin(), rewards.end());
  out.back() += lambda * std::log(1.0 - clamp_score(detector_score));
  return out;
}

double relative_reward(double r, double r_noncheater, double r_pure) {
  if (r_pure == r_noncheater) throw ConfigError("relative reward is undefined when both reference rewards agree");
  return (r - r_noncheater) / (r_pure - r_noncheater);
}

std::string to_string(AdversarialMode mode) { return mode == AdversarialMode::joint ? "joint" : "cheater_only"; }
std::string to_string(CheaterArch arch) { return arch == CheaterArch::structured ? "structured" : "unstructured"; }

AdversarialMode parse_adversarial_mode(const std::string& name) {
  if (name == "joint") return AdversarialMode::joint;
  if (name == "cheater_only") return AdversarialMode::cheater_only;
  throw ConfigError("unknown mode '" + name + "' (expected joint or cheater_only)");
}

CheaterArch parse_cheater_arch(const std::string& name) {
  if (name == "structured") return CheaterArch::structured;
  if (name == "unstructured") return CheaterArch::unstructured;
  throw ConfigError("unknown cheater architecture '" + name + "' (expected structured or unstructured)");
}

GatingModel::GatingModel(std::size_t input_width, std::vector<int> hidden) : hidden_(std::move(hidden)) {
  std::vector<int> sizes{static_cast<int>(input_width)};
  sizes.insert(sizes.end(), hidden_.begin(), hidden_.end());
  sizes.push_back(2);
  net_ = nn::Mlp(sizes);
  params_.assign(net_.num_params(), 0.0);
}

void GatingModel::init(Rng& rng) { net_.init(params_, rng, std::sqrt(2.0), 0.01); }

std::pair<double, double> GatingModel::forward(std::span<const double> input) const {
  double out[2];
  net_.forward(params_, input, out);
  return {nn::sigmoid(out[0]), out[1]};
}

GatedCheater::GatedCheater(std::shared_ptr<const ActorCritic> noncheater, std::shared_ptr<const ActorCritic> pure,
                           GatingModel gating)
    : noncheater_(std::move(noncheater)), pure_(std::move(pure)), gating_(std::move(gating)) {
  if (!noncheater_ || !pure_) throw ConfigError("gated cheater needs both pretrained policies");
  if (noncheater_->num_actions() != pure_->num_actions()) throw ConfigError("policies disagree on the action set");
  if (noncheater_->input_width() > pure_->input_width())
    throw ConfigError("non-cheater input must be a suffix of the cheater input");
  if (gating_.input_width() != pure_->input_width()) throw ConfigError("gating input must match the cheater input");
}

double GatedCheater::omega(std::span<const double> input) const { return gating_.forward(input).first; }

double GatedCheater::evaluate(std::span<const double> input, std::span<double> probs) const {
  if (input.size() != input_width()) throw ConfigError("observation width does not match the policy input");
  const auto n = static_cast<std::size_t>(num_actions());
  std::vector<double> pn(n), pp(n);
  noncheater_->evaluate(input.subspan(partial_offset()), pn);
  const double vp = pure_->evaluate(input, pp);
  const auto [w, vd] = gating_.forward(input);
  for (std::size_t a = 0; a < n; ++a) probs[a] = (1.0 - w) * pn[a] + w * pp[a];
  return vp + vd;
}

namespace {

nn::Matrix batch_softmax(const nn::Matrix& logits) {
  nn::Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    const auto col = logits.col(j);
    const double mx = col.maxCoeff();
    p.col(j) = (col.array() - mx).exp();
    p.col(j) /= p.col(j).sum();
  }
  return p;
}

}  // namespace

void GatedObjective::prepare(RolloutBatch& batch) const {
  const auto& pn_model = model_.noncheater();
  const auto& pp_model = model_.pure();
  const auto off = static_cast<Eigen::Index>(model_.partial_offset());
  const nn::Matrix partial = batch.inputs.bottomRows(batch.inputs.rows() - off);
  nn::Mlp::Tape tape;
  batch.aux_probs_a = batch_softmax(pn_model.actor().forward_batch(pn_model.actor_params(), partial, tape));
  batch.aux_probs_b = batch_softmax(pp_model.actor().forward_batch(pp_model.actor_params(), batch.inputs, tape));
  const nn::Matrix& vp = pp_model.critic().forward_batch(pp_model.critic_params(), batch.inputs, tape);
  batch.aux_values.assign(vp.data(), vp.data() + vp.size());
}

LossParts GatedObjective::loss_and_grad(const RolloutBatch& batch, std::span<const std::size_t> index,
                                        std::span<const double> advantages, const TrainConfig& config,
                                        std::span<double> grad) const {
  const auto n = static_cast<Eigen::Index>(index.size());
  const int n_actions = model_.num_actions();
  const auto& gating = model_.gating();
  nn::Matrix x(batch.inputs.rows(), n);
  for (Eigen::Index j = 0; j < n; ++j) x.col(j) = batch.inputs.col(static_cast<Eigen::Index>(index[static_cast<std::size_t>(j)]));
  nn::Mlp::Tape tape;
  const nn::Matrix& out = gating.network().forward_batch(gating.params(), x, tape);

  nn::Matrix d_out(2, n);
  LossParts parts;
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<double> pi(static_cast<std::size_t>(n_actions)), logpi(static_cast<std::size_t>(n_actions));
  for (Eigen::Index j = 0; j < n; ++j) {
    const std::size_t i = index[static_cast<std::size_t>(j)];
    const auto col = static_cast<Eigen::Index>(i);
    const double w = nn::sigmoid(out(0, j));
    double entropy = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      const auto ua = static_cast<std::size_t>(a);
      pi[ua] = (1.0 - w) * batch.aux_probs_a(a, col) + w * batch.aux_probs_b(a, col);
      logpi[ua] = std::log(std::max(pi[ua], 1e-300));
      entropy -= pi[ua] * logpi[ua];
    }
    const int act = batch.actions[i];
    const auto ua = static_cast<std::size_t>(act);
    const auto term = clipped_surrogate(logpi[ua], batch.old_log_probs[i], advantages[i], config.clip);
    const double value = batch.aux_values[i] + out(1, j);
    const double v_err = value - batch.returns[i];

    parts.policy -= term.objective * inv_n;
    parts.value += v_err * v_err * inv_n;
    parts.entropy += entropy * inv_n;
    parts.clip_fraction += (term.clipped ? 1.0 : 0.0) * inv_n;

    // d log pi_a / d omega and d H / d omega for the linear blend
    const double dlogp_dw = (batch.aux_probs_b(act, col) - batch.aux_probs_a(act, col)) / std::max(pi[ua], 1e-300);
    double dh_dw = 0.0;
    for (int a = 0; a < n_actions; ++a)
      dh_dw -= (batch.aux_probs_b(a, col) - batch.aux_probs_a(a, col)) * logpi[static_cast<std::size_t>(a)];
    const double dl_dw = -term.d_log_prob * dlogp_dw - config.ent_coef * dh_dw;
    d_out(0, j) = dl_dw * w * (1.0 - w) * inv_n;
    d_out(1, j) = 2.0 * config.vf_coef * v_err * inv_n;
  }
  parts.total = parts.policy + config.vf_coef * parts.value - config.ent_coef * parts.entropy;
  gating.network().backward_batch(gating.params(), tape, d_out, grad);
  return parts;
}

void AdversarialConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw ConfigError("lambda must be a finite non-negative number");
  if (iterations < 0) throw ConfigError("iterations must be non-negative");
  if (episodes_per_iteration == 0) throw ConfigError("episodes_per_iteration must be positive");
  if (detector_passes < 0) throw ConfigError("detector_passes must be non-negative");
  if (detector_batch_size == 0) throw ConfigError("detector_batch_size must be positive");
  if (!(detector_learning_rate > 0.0)) throw ConfigError("detector_learning_rate must be positive");
  if (workers == 0) throw ConfigError("workers must be positive");
  ppo.validate();
}

const Policy& AdversarialResult::cheater() const {
  if (structured) return *structured;
  return *unstructured;
}

AdversarialResult adversarial_train(std::shared_ptr<const ActorCritic> noncheater,
                                    std::shared_ptr<const ActorCritic> pure, const Detector& detector,
                                    const nn::Adam& detector_optimizer, const EnvConfig& env,
                                    const AdversarialConfig& config,
                                    const std::function<void(const IterationMetrics&)>& on_iteration) {
  config.validate();
  env.validate();
  if (!noncheater || !pure) throw ConfigError("adversarial training needs both pretrained policies");
  if (pure->input_width() != input_width(env, Observability::full) ||
      noncheater->input_width() != input_width(env, Observability::partial))
    throw ConfigError("pretrained policies do not match the environment's observation widths");

  Rng rng(derive_seed(config.seed, 0x616476));
  // The detector shuffles with its own stream so that cheater updates do not
  // depend on whether the detector trains.
  Rng detector_rng(derive_seed(config.seed, 0x646574));
  AdversarialResult result;
  result.detector = detector;
  result.detector_optimizer = detector_optimizer;
  result.detector_optimizer.config().learning_rate = config.detector_learning_rate;
  if (result.detector_optimizer.first_moment().size() != detector.params().size())
    result.detector_optimizer = nn::Adam(detector.params().size(), {config.detector_learning_rate, 0.9, 0.999, 1e-8});

  std::unique_ptr<PpoObjective> objective;
  if (config.cheater_arch == CheaterArch::structured) {
    GatingModel gating(pure->input_width(), config.gating_hidden);
    gating.init(rng);
    result.structured = std::make_unique<GatedCheater>(noncheater, pure, std::move(gating));
    objective = std::make_unique<GatedObjective>(*result.structured);
  } else {
    result.unstructured = std::make_unique<ActorCritic>(*pure);
    objective = std::make_unique<ActorCriticObjective>(*result.unstructured);
  }
  result.cheater_optimizer = nn::Adam(objective->trainable_params().size(), config.ppo.adam());

  RecordOptions cheater_opts{PlayerLabel::cheater, false, true};
  RecordOptions noncheater_opts{PlayerLabel::noncheater, false, false};
  // Training episodes use a seed range of their own so evaluation seeds stay unseen.
  const std::uint64_t seed_base = derive_seed(config.seed, 0x7365656473) & 0xffffffffffffULL;
  const std::size_t per_iter = config.episodes_per_iteration;

  for (int it = 1; it <= config.iterations; ++it) {
    const Policy& cheater = result.cheater();
    EnvConfig cheater_env = env;
    cheater_env.seed = seed_base + static_cast<std::uint64_t>(it - 1) * 2 * per_iter;
    EnvConfig noncheater_env = env;
    noncheater_env.seed = cheater_env.seed + per_iter;
    auto cheater_eps = collect_rollouts(cheater, cheater_env, Observability::full, per_iter, config.workers, cheater_opts);
    auto noncheater_eps =
        collect_rollouts(*noncheater, noncheater_env, Observability::partial, per_iter, config.workers, noncheater_opts);
    // Zero-length episodes carry nothing to learn from or to classify.
    std::erase_if(cheater_eps, [](const EpisodeRecord& e) { return e.length == 0; });
    std::erase_if(noncheater_eps, [](const EpisodeRecord& e) { return e.length == 0; });
    if (cheater_eps.empty() || noncheater_eps.empty()) throw NumericError("iteration produced no usable episodes");

    std::vector<DetectorSample> samples;
    samples.reserve(cheater_eps.size() + noncheater_eps.size());
    for (const auto& e : cheater_eps) samples.push_back(make_detector_sample(e));
    for (const auto& e : noncheater_eps) samples.push_back(make_detector_sample(e));
    const auto scores = result.detector.score_all(samples);

    IterationMetrics m;
    m.iteration = it;
    std::vector<std::vector<double>> shaped(cheater_eps.size());
    for (std::size_t e = 0; e < cheater_eps.size(); ++e) {
      shaped[e] = shape_rewards(cheater_eps[e].rewards, scores[e], config.lambda);
      m.avg_reward += cheater_eps[e].total_return;
      m.avg_length += static_cast<double>(cheater_eps[e].length);
      m.avg_shaped_return += std::accumulate(shaped[e].begin(), shaped[e].end(), 0.0);
      m.mean_score += scores[e];
    }
    const double inv_c = 1.0 / static_cast<double>(cheater_eps.size());
    m.avg_reward *= inv_c;
    m.avg_length *= inv_c;
    m.avg_shaped_return *= inv_c;
    m.mean_score *= inv_c;
    std::vector<int> labels;
    labels.reserve(samples.size());
    for (const auto& s : samples) labels.push_back(s.label);
    m.ap = average_precision(labels, scores);
    m.auroc = auroc(labels, scores);
    m.detector_loss = bce_loss(labels, scores);

    auto batch = make_rollout_batch(cheater_eps, shaped, config.ppo.gae_lambda);
    if (result.structured) {
      double total = 0.0;
      for (Eigen::Index j = 0; j < batch.inputs.cols(); ++j) {
        const nn::Vector col = batch.inputs.col(j);
        total += result.structured->omega(std::span<const double>(col.data(), static_cast<std::size_t>(col.size())));
      }
      m.mean_omega = total / static_cast<double>(batch.inputs.cols());
    }
    m.ppo = ppo_update(*objective, result.cheater_optimizer, batch, config.ppo, rng);

    if (config.mode == AdversarialMode::joint) {
      for (int pass = 0; pass < config.detector_passes; ++pass)
        bce_train_epoch(result.detector, result.detector_optimizer, samples, config.detector_batch_size, detector_rng);
    }
    result.history.push_back(m);
    if (on_iteration) on_iteration(m);
  }
  return result;
}

FinalMetrics evaluate_pair(const Policy& cheater, const Policy& noncheater, const Detector& detector,
                           const EnvConfig& env, std::size_t n_episodes, std::uint64_t seed, std::size_t workers) {
  EnvConfig e = env;
  e.seed = seed;
  const auto c_eps = collect_rollouts(cheater, e, Observability::full, n_episodes, workers, {PlayerLabel::cheater});
  const auto n_eps = collect_rollouts(noncheater, e, Observability::partial, n_episodes, workers, {PlayerLabel::noncheater});
  std::vector<DetectorSample> samples;
  FinalMetrics out;
  std::size_t nc = 0, nn_ = 0;
  for (const auto& ep : c_eps) {
    out.avg_reward += ep.total_return;
    out.avg_length += static_cast<double>(ep.length);
    ++nc;
    if (ep.length > 0) samples.push_back(make_detector_sample(ep));
  }
  for (const auto& ep : n_eps) {
    out.noncheater_reward += ep.total_return;
    out.noncheater_length += static_cast<double>(ep.length);
    ++nn_;
    if (ep.length > 0) samples.push_back(make_detector_sample(ep));
  }
  if (nc > 0) {
    out.avg_reward /= static_cast<double>(nc);
    out.avg_length /= static_cast<double>(nc);
  }
  if (nn_ > 0) {
    out.noncheater_reward /= static_cast<double>(nn_);
    out.noncheater_length /= static_cast<double>(nn_);
  }
  const auto m = evaluate_detector(detector, samples);
  out.ap = m.ap;
  out.auroc = m.auroc;
  return out;
}

}  // namespace espsim
