#include "espsim/detector.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "espsim/errors.hpp"
#include "espsim/metrics.hpp"

namespace espsim {

std::string to_string(DetectorVariant variant) {
  switch (variant) {
    case DetectorVariant::trajectory: return "trajectory";
    case DetectorVariant::length: return "length";
    case DetectorVariant::reward: return "reward";
  }
  return "?";
}

DetectorVariant parse_detector_variant(const std::string& name) {
  if (name == "trajectory") return DetectorVariant::trajectory;
  if (name == "length") return DetectorVariant::length;
  if (name == "reward") return DetectorVariant::reward;
  throw ConfigError("unknown detector variant '" + name + "' (expected trajectory, length or reward)");
}

double clamp_score(double d) { return std::clamp(d, kScoreClamp, 1.0 - kScoreClamp); }

DetectorSample make_detector_sample(const EpisodeRecord& episode) {
  DetectorSample s;
  s.input = encode_detector(episode);
  s.length = static_cast<double>(episode.length);
  s.reward = episode.total_return;
  s.label = static_cast<int>(episode.label);
  return s;
}

Detector Detector::trajectory(std::size_t input_width, std::vector<int> hidden) {
  if (input_width == 0) throw ConfigError("detector input width must be positive");
  Detector d;
  d.variant_ = DetectorVariant::trajectory;
  d.input_width_ = input_width;
  d.hidden_ = std::move(hidden);
  std::vector<int> sizes{static_cast<int>(input_width)};
  sizes.insert(sizes.end(), d.hidden_.begin(), d.hidden_.end());
  sizes.push_back(1);
  d.net_ = nn::Mlp(sizes);
  d.params_.assign(d.net_.num_params(), 0.0);
  return d;
}

Detector Detector::logistic(DetectorVariant variant, double b, double t) {
  if (variant == DetectorVariant::trajectory) throw ConfigError("trajectory detectors are not logistic");
  if (t == 0.0 || !std::isfinite(b)) throw ConfigError("logistic detector needs finite b and non-zero t");
  Detector d;
  d.variant_ = variant;
  d.params_ = {1.0 / t, -b / t};  // w, c with center 0 and scale 1
  return d;
}

void Detector::init(Rng& rng) {
  if (variant_ == DetectorVariant::trajectory) {
    net_.init(params_, rng, std::sqrt(2.0), 1.0);
  } else {
    std::fill(params_.begin(), params_.end(), 0.0);
  }
}

void Detector::set_standardization(double center, double scale) {
  if (!(scale > 0.0) || !std::isfinite(center)) throw ConfigError("standardization scale must be positive");
  center_ = center;
  scale_ = scale;
}

void Detector::fit_scale(std::span<const DetectorSample> samples) {
  if (variant_ == DetectorVariant::trajectory || samples.empty()) return;
  std::vector<double> x;
  x.reserve(samples.size());
  for (const auto& s : samples) x.push_back(variant_ == DetectorVariant::length ? s.length : s.reward);
  const double mu = mean(x);
  double sd = population_stdev(x);
  if (!(sd > 1e-12)) sd = 1.0;
  const double w = params_[0];
  if (w != 0.0) {
    const double b_old = b(), t_old = t();
    params_[0] = sd / t_old;
    params_[1] = (mu - b_old) / t_old;
  }
  center_ = mu;
  scale_ = sd;
}

double Detector::b() const {
  if (variant_ == DetectorVariant::trajectory || params_[0] == 0.0) return std::numeric_limits<double>::quiet_NaN();
  return center_ - params_[1] * scale_ / params_[0];
}

double Detector::t() const {
  if (variant_ == DetectorVariant::trajectory) return std::numeric_limits<double>::quiet_NaN();
  if (params_[0] == 0.0) return std::numeric_limits<double>::infinity();
  return scale_ / params_[0];
}

double Detector::scalar_feature(const DetectorSample& sample) const {
  const double x = variant_ == DetectorVariant::length ? sample.length : sample.reward;
  return (x - center_) / scale_;
}

double Detector::logit(const DetectorSample& sample) const {
  if (variant_ != DetectorVariant::trajectory) return params_[0] * scalar_feature(sample) + params_[1];
  if (sample.input.size() != input_width_) throw ConfigError("detector input width mismatch");
  double out = 0.0;
  net_.forward(params_, sample.input, std::span(&out, 1));
  return out;
}

double Detector::score(const DetectorSample& sample) const { return nn::sigmoid(logit(sample)); }

std::vector<double> Detector::score_all(std::span<const DetectorSample> samples) const {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(score(s));
  return out;
}

double Detector::loss_and_grad(std::span<const DetectorSample> samples, std::span<const std::size_t> index,
                               std::span<double> grad) const {
  const std::size_t n = index.size();
  if (n == 0) return 0.0;
  const double inv_n = 1.0 / static_cast<double>(n);
  double loss = 0.0;
  auto bce = [](int y, double d) {
    const double dc = clamp_score(d);
    return -(y == 1 ? std::log(dc) : std::log(1.0 - dc));
  };
  if (variant_ != DetectorVariant::trajectory) {
    for (std::size_t i : index) {
      const auto& s = samples[i];
      const double z = scalar_feature(s);
      const double d = nn::sigmoid(params_[0] * z + params_[1]);
      loss += bce(s.label, d) * inv_n;
      const double g = (d - s.label) * inv_n;
      grad[0] += g * z;
      grad[1] += g;
    }
    return loss;
  }
  nn::Matrix x(static_cast<Eigen::Index>(input_width_), static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const auto& in = samples[index[j]].input;
    if (in.size() != input_width_) throw ConfigError("detector input width mismatch");
    x.col(static_cast<Eigen::Index>(j)) = Eigen::Map<const nn::Vector>(in.data(), static_cast<Eigen::Index>(in.size()));
  }
  nn::Mlp::Tape tape;
  const nn::Matrix& logits = net_.forward_batch(params_, x, tape);
  nn::Matrix d_out(1, static_cast<Eigen::Index>(n));
  for (std::size_t j = 0; j < n; ++j) {
    const int y = samples[index[j]].label;
    const double d = nn::sigmoid(logits(0, static_cast<Eigen::Index>(j)));
    loss += bce(y, d) * inv_n;
    d_out(0, static_cast<Eigen::Index>(j)) = (d - y) * inv_n;
  }
  net_.backward_batch(params_, tape, d_out, grad);
  return loss;
}

double bce_loss(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size() || labels.empty()) throw ConfigError("bce needs aligned non-empty inputs");
  double loss = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double d = clamp_score(scores[i]);
    loss -= labels[i] == 1 ? std::log(d) : std::log(1.0 - d);
  }
  return loss / static_cast<double>(labels.size());
}

double bce_train_step(Detector& detector, nn::Adam& optimizer, std::span<const DetectorSample> samples,
                      std::span<const std::size_t> index) {
  nn::ParamVector grad(detector.params().size(), 0.0);
  const double loss = detector.loss_and_grad(samples, index, grad);
  if (!std::isfinite(loss) || !nn::all_finite(grad)) throw NumericError("non-finite detector loss");
  optimizer.step(detector.params(), grad);
  return loss;
}

double bce_train_epoch(Detector& detector, nn::Adam& optimizer, std::span<const DetectorSample> samples,
                       std::size_t batch_size, Rng& rng) {
  if (samples.empty()) return 0.0;
  if (batch_size == 0) throw ConfigError("detector batch size must be positive");
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order.begin(), order.end());
  double total = 0.0;
  std::size_t steps = 0;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    const std::size_t stop = std::min(order.size(), start + batch_size);
    total += bce_train_step(detector, optimizer, samples, std::span(order).subspan(start, stop - start));
    ++steps;
  }
  return total / static_cast<double>(steps);
}

DetectorMetrics evaluate_detector(const Detector& detector, std::span<const DetectorSample> samples) {
  std::vector<int> labels;
  labels.reserve(samples.size());
  for (const auto& s : samples) labels.push_back(s.label);
  const auto scores = detector.score_all(samples);
  DetectorMetrics m;
  m.loss = bce_loss(labels, scores);
  m.ap = average_precision(labels, scores);
  m.auroc = auroc(labels, scores);
  return m;
}

namespace {

std::vector<DetectorSample> play_split(const Policy& noncheater, const Policy& cheater, EnvConfig env,
                                       std::size_t n, std::uint64_t base, std::size_t workers) {
  std::vector<DetectorSample> out;
  out.reserve(2 * n);
  RecordOptions opts;
  env.seed = base;
  opts.label = PlayerLabel::noncheater;
  for (const auto& ep : collect_rollouts(noncheater, env, Observability::partial, n, workers, opts))
    out.push_back(make_detector_sample(ep));
  env.seed = base + n;
  opts.label = PlayerLabel::cheater;
  for (const auto& ep : collect_rollouts(cheater, env, Observability::full, n, workers, opts))
    out.push_back(make_detector_sample(ep));
  return out;
}

}  // namespace

LabeledDataset build_dataset(const Policy& noncheater, const Policy& cheater, const EnvConfig& env,
                             const DatasetSizes& sizes, std::uint64_t seed, std::size_t workers) {
  if (sizes.train == 0 || sizes.valid == 0 || sizes.test == 0) throw ConfigError("dataset splits must be non-empty");
  LabeledDataset ds;
  std::uint64_t base = seed;
  ds.train = play_split(noncheater, cheater, env, sizes.train, base, workers);
  base += 2 * sizes.train;
  ds.valid = play_split(noncheater, cheater, env, sizes.valid, base, workers);
  base += 2 * sizes.valid;
  ds.test = play_split(noncheater, cheater, env, sizes.test, base, workers);
  return ds;
}

LabeledDataset shuffle_labels(LabeledDataset dataset, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x73687566));
  for (auto* split : {&dataset.train, &dataset.valid, &dataset.test}) {
    std::vector<int> labels;
    for (const auto& s : *split) labels.push_back(s.label);
    rng.shuffle(labels.begin(), labels.end());
    for (std::size_t i = 0; i < split->size(); ++i) (*split)[i].label = labels[i];
  }
  return dataset;
}

void DetectorTrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("detector epochs must be non-negative");
  if (batch_size == 0) throw ConfigError("detector batch size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("detector learning rate must be positive");
}

DetectorPretrainResult pretrain_detector(const LabeledDataset& dataset, const DetectorTrainConfig& config,
                                         const std::function<void(const DetectorEpoch&)>& on_epoch) {
  config.validate();
  if (dataset.train.empty() || dataset.valid.empty() || dataset.test.empty())
    throw ConfigError("detector dataset splits must be non-empty");
  Rng rng(derive_seed(config.seed, 0x646574));
  Detector det = config.variant == DetectorVariant::trajectory
                     ? Detector::trajectory(dataset.train.front().input.size(), config.hidden)
                     : Detector::logistic(config.variant, 0.0, 1.0);
  det.init(rng);
  det.fit_scale(dataset.train);
  nn::Adam adam(det.params().size(), {config.learning_rate, 0.9, 0.999, 1e-8});

  DetectorPretrainResult result;
  result.detector = det;
  result.optimizer = adam;
  result.valid = evaluate_detector(det, dataset.valid);
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    DetectorEpoch row;
    row.epoch = epoch;
    row.train_loss = bce_train_epoch(det, adam, dataset.train, config.batch_size, rng);
    row.valid = evaluate_detector(det, dataset.valid);
    result.curve.push_back(row);
    if (on_epoch) on_epoch(row);
    if (row.valid.loss < result.valid.loss) {
      result.valid = row.valid;
      result.best_epoch = epoch;
      result.detector = det;
      result.optimizer = adam;
    }
  }
  result.test = evaluate_detector(result.detector, dataset.test);
  return result;
}

}  // namespace espsim
