#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "espsim/env.hpp"
#include "espsim/nn.hpp"

namespace espsim {

enum class DetectorVariant { trajectory, length, reward };

std::string to_string(DetectorVariant variant);
DetectorVariant parse_detector_variant(const std::string& name);

inline constexpr double kScoreClamp = 1e-6;

// Keeps a probability away from 0 and 1 before it reaches a logarithm.
double clamp_score(double d);

// What any detector variant may look at for one episode, plus its label.
struct DetectorSample {
  std::vector<double> input;  // label-blind trajectory encoding
  double length = 0.0;
  double reward = 0.0;
  int label = 0;  // 1 = cheater
};

DetectorSample make_detector_sample(const EpisodeRecord& episode);

// Classifier D over episodes. The trajectory variant is an MLP over the
// env's detector encoding; the length and reward variants are logistic in a
// scalar x with D = 1 / (1 + exp(-(x - b) / t)).
//
// The logistic variants are stored as D = sigmoid(w z + c) over the
// standardised z = (x - mu) / s, which keeps t's sign learnable through
// w = 0. Then t = s / w and b = mu - c s / w.
class Detector {
 public:
  Detector() = default;
  static Detector trajectory(std::size_t input_width, std::vector<int> hidden = {64, 64});
  static Detector logistic(DetectorVariant variant, double b, double t);

  void init(Rng& rng);
  // Sets mu and s for a logistic variant from training data (b and t stay put).
  void fit_scale(std::span<const DetectorSample> samples);

  DetectorVariant variant() const { return variant_; }
  std::size_t input_width() const { return input_width_; }
  const std::vector<int>& hidden() const { return hidden_; }
  const nn::Mlp& network() const { return net_; }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  double b() const;
  double t() const;
  double center() const { return center_; }
  double scale() const { return scale_; }
  void set_standardization(double center, double scale);

  double logit(const DetectorSample& sample) const;
  // Probability the sample came from the cheater, unclamped.
  double score(const DetectorSample& sample) const;
  std::vector<double> score_all(std::span<const DetectorSample> samples) const;

  // Mean BCE over samples[index] (clamped logs); gradient accumulated into
  // `grad` as d/dlogit = D - y.
  double loss_and_grad(std::span<const DetectorSample> samples, std::span<const std::size_t> index,
                       std::span<double> grad) const;

 private:
  double scalar_feature(const DetectorSample& sample) const;

  DetectorVariant variant_ = DetectorVariant::trajectory;
  std::size_t input_width_ = 0;
  std::vector<int> hidden_;
  nn::Mlp net_;
  nn::ParamVector params_;
  double center_ = 0.0;
  double scale_ = 1.0;
};

// Mean -[y log D + (1 - y) log(1 - D)] with D clamped.
double bce_loss(std::span<const int> labels, std::span<const double> scores);

// One Adam step on the mean BCE of samples[index]. Throws NumericError on NaN.
double bce_train_step(Detector& detector, nn::Adam& optimizer, std::span<const DetectorSample> samples,
                      std::span<const std::size_t> index);

// Shuffled minibatch pass over all samples; returns the mean step loss.
double bce_train_epoch(Detector& detector, nn::Adam& optimizer, std::span<const DetectorSample> samples,
                       std::size_t batch_size, Rng& rng);

struct DetectorMetrics {
  double loss = 0.0;
  double ap = 0.0;
  double auroc = 0.0;
};

DetectorMetrics evaluate_detector(const Detector& detector, std::span<const DetectorSample> samples);

struct DatasetSizes {
  std::size_t train = 2000;  // per policy
  std::size_t valid = 400;
  std::size_t test = 400;
};

struct LabeledDataset {
  std::vector<DetectorSample> train;
  std::vector<DetectorSample> valid;
  std::vector<DetectorSample> test;
};

// Plays the non-cheater on partial observations and the cheater on full
// ones, equal counts per split. Episode seeds are disjoint across splits and
// policies.
LabeledDataset build_dataset(const Policy& noncheater, const Policy& cheater, const EnvConfig& env,
                             const DatasetSizes& sizes, std::uint64_t seed, std::size_t workers = 1);

// Permutes labels within each split (null-distribution check).
LabeledDataset shuffle_labels(LabeledDataset dataset, std::uint64_t seed);

struct DetectorTrainConfig {
  DetectorVariant variant = DetectorVariant::trajectory;
  int epochs = 20;
  std::size_t batch_size = 8;
  double learning_rate = 3e-4;
  std::vector<int> hidden = {64, 64};
  std::uint64_t seed = 0;

  void validate() const;
};

struct DetectorEpoch {
  int epoch = 0;
  double train_loss = 0.0;
  DetectorMetrics valid;
};

struct DetectorPretrainResult {
  Detector detector;  // lowest validation loss
  nn::Adam optimizer;
  int best_epoch = 0;
  DetectorMetrics valid;
  DetectorMetrics test;
  std::vector<DetectorEpoch> curve;
};

DetectorPretrainResult pretrain_detector(const LabeledDataset& dataset, const DetectorTrainConfig& config,
                                         const std::function<void(const DetectorEpoch&)>& on_epoch = {});

}  // namespace espsim
