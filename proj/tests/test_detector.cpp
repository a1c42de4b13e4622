#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "espsim/detector.hpp"
#include "espsim/errors.hpp"

using namespace espsim;

namespace {

DetectorSample scalar_sample(double length, double reward, int label = 0) {
  DetectorSample s;
  s.length = length;
  s.reward = reward;
  s.label = label;
  return s;
}

// Cheaters are shorter on average; `signal` scales the gap.
std::vector<DetectorSample> synthetic(std::size_t n, double signal, Rng& rng, std::size_t width = 6) {
  std::vector<DetectorSample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = static_cast<int>(i % 2);
    DetectorSample s;
    s.label = y;
    s.length = 30.0 - signal * 8.0 * y + 5.0 * rng.normal();
    s.reward = 1.0 + signal * y + rng.normal();
    s.input.resize(width);
    for (double& v : s.input) v = rng.normal();
    s.input[0] += signal * 2.0 * y;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<std::size_t> all_of(std::size_t n) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

double fd_error(Detector& det, const std::vector<DetectorSample>& samples) {
  const auto idx = all_of(samples.size());
  std::vector<double> grad(det.params().size(), 0.0), scratch(grad.size());
  det.loss_and_grad(samples, idx, grad);
  double worst = 0.0;
  auto p = det.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + 1e-6;
    const double up = det.loss_and_grad(samples, idx, scratch);
    p[i] = saved - 1e-6;
    const double down = det.loss_and_grad(samples, idx, scratch);
    p[i] = saved;
    const double fd = (up - down) / 2e-6;
    worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1e-3, std::abs(fd) + std::abs(grad[i])));
  }
  return worst;
}

}  // namespace

TEST_CASE("logistic detector worked examples") {
  const auto len = Detector::logistic(DetectorVariant::length, 40.0, 3.0);
  CHECK(len.score(scalar_sample(40.0, 0.0)) == doctest::Approx(0.5));
  CHECK(len.b() == doctest::Approx(40.0));
  CHECK(len.t() == doctest::Approx(3.0));
  const auto flipped = Detector::logistic(DetectorVariant::length, 40.0, -1.0);
  CHECK(flipped.score(scalar_sample(35.0, 0.0)) == doctest::Approx(1.0 / (1.0 + std::exp(-5.0))));
  CHECK(flipped.score(scalar_sample(35.0, 0.0)) == doctest::Approx(0.9933).epsilon(1e-4));
  const auto rew = Detector::logistic(DetectorVariant::reward, 0.5, 0.25);
  CHECK(rew.score(scalar_sample(99.0, 1.0)) == doctest::Approx(1.0 / (1.0 + std::exp(-2.0))));
  CHECK_THROWS_AS(Detector::logistic(DetectorVariant::reward, 0.0, 0.0), ConfigError);
  CHECK_THROWS_AS(Detector::logistic(DetectorVariant::trajectory, 0.0, 1.0), ConfigError);
}

TEST_CASE("standardization leaves the logistic function unchanged") {
  auto det = Detector::logistic(DetectorVariant::length, 12.0, -2.5);
  Rng rng(1);
  const auto data = synthetic(100, 1.0, rng);
  const double before = det.score(scalar_sample(9.0, 0.0));
  det.fit_scale(data);
  CHECK(det.score(scalar_sample(9.0, 0.0)) == doctest::Approx(before).epsilon(1e-12));
  CHECK(det.b() == doctest::Approx(12.0));
  CHECK(det.t() == doctest::Approx(-2.5));
}

TEST_CASE("logistic scores are monotone with the sign of t") {
  Rng rng(2);
  for (int trial = 0; trial < 200; ++trial) {
    const double b = 10 * rng.normal();
    const double t = (rng.below(2) ? 1.0 : -1.0) * (0.1 + rng.uniform() * 5);
    const auto det = Detector::logistic(trial % 2 ? DetectorVariant::length : DetectorVariant::reward, b, t);
    const double x1 = 10 * rng.normal();
    const double x2 = x1 + 0.01 + rng.uniform();
    const double s1 = det.score(scalar_sample(x1, x1));
    const double s2 = det.score(scalar_sample(x2, x2));
    if (t > 0) CHECK(s2 >= s1);
    else CHECK(s2 <= s1);
  }
}

TEST_CASE("zero-weight detectors score one half") {
  auto traj = Detector::trajectory(5, {4});
  DetectorSample s;
  s.input = {1, 2, 3, 4, 5};
  CHECK(traj.score(s) == 0.5);
  auto len = Detector::logistic(DetectorVariant::length, 0.0, 1.0);
  Rng rng(0);
  len.init(rng);
  CHECK(len.score(scalar_sample(123.0, 0.0)) == 0.5);
  s.input.pop_back();
  CHECK_THROWS_AS(traj.score(s), ConfigError);
}

TEST_CASE("bce worked examples") {
  const std::vector<int> y{1, 0, 1, 0};
  CHECK(bce_loss(y, std::vector<double>(4, 0.5)) == doctest::Approx(std::log(2.0)));
  CHECK(bce_loss(y, std::vector<double>{0.999, 0.001, 0.999, 0.001}) == doctest::Approx(-std::log(0.999)));
  CHECK(bce_loss(y, std::vector<double>{0.999, 0.001, 0.999, 0.001}) == doctest::Approx(0.001).epsilon(0.01));
  // Saturated scores are clamped, so the loss stays finite.
  CHECK(bce_loss(std::vector<int>{1}, std::vector<double>{0.0}) == doctest::Approx(-std::log(kScoreClamp)));
  CHECK(clamp_score(1.0) == 1.0 - kScoreClamp);
}

TEST_CASE("bce gradients match central differences") {
  Rng rng(3);
  auto data = synthetic(24, 1.0, rng);
  SUBCASE("trajectory") {
    auto det = Detector::trajectory(6, {5, 4});
    det.init(rng);
    for (double& p : det.params()) p += 0.2 * rng.normal();
    CHECK(fd_error(det, data) < 1e-4);
  }
  SUBCASE("length") {
    auto det = Detector::logistic(DetectorVariant::length, 25.0, -4.0);
    det.fit_scale(data);
    CHECK(fd_error(det, data) < 1e-4);
  }
  SUBCASE("reward") {
    auto det = Detector::logistic(DetectorVariant::reward, 1.0, 0.7);
    CHECK(fd_error(det, data) < 1e-4);
  }
}

TEST_CASE("bce training separates a learnable signal") {
  Rng rng(4);
  LabeledDataset ds{synthetic(2000, 1.0, rng), synthetic(400, 1.0, rng), synthetic(400, 1.0, rng)};
  for (auto variant : {DetectorVariant::trajectory, DetectorVariant::length, DetectorVariant::reward}) {
    DetectorTrainConfig cfg;
    cfg.variant = variant;
    cfg.epochs = 5;
    cfg.hidden = {16};
    const auto r = pretrain_detector(ds, cfg);
    CAPTURE(to_string(variant));
    CHECK(r.test.auroc > 0.75);
    REQUIRE(r.curve.size() == 5);
    double lowest = 1e9;
    for (const auto& e : r.curve) lowest = std::min(lowest, e.valid.loss);
    CHECK(r.valid.loss == doctest::Approx(lowest));
    CHECK(r.curve[static_cast<std::size_t>(r.best_epoch - 1)].valid.loss == r.valid.loss);
    if (variant == DetectorVariant::length) CHECK(r.detector.t() < 0.0);
    if (variant == DetectorVariant::reward) CHECK(r.detector.t() > 0.0);
  }
}

TEST_CASE("label-shuffled data gives chance-level detection") {
  Rng rng(5);
  LabeledDataset ds{synthetic(2000, 1.0, rng), synthetic(400, 1.0, rng), synthetic(4000, 1.0, rng)};
  ds = shuffle_labels(std::move(ds), 9);
  int positives = 0;
  for (const auto& s : ds.train) positives += s.label;
  CHECK(positives == 1000);
  DetectorTrainConfig cfg;
  cfg.variant = DetectorVariant::length;
  cfg.epochs = 5;
  const auto r = pretrain_detector(ds, cfg);
  CHECK(r.test.auroc > 0.45);
  CHECK(r.test.auroc < 0.55);
}

TEST_CASE("datasets are balanced and label-blind in their inputs") {
  EnvConfig env;
  env.game = Game::blackjack;
  ConstantPolicy stand(input_width(env, Observability::partial), {0, 1, 0, 0});
  ConstantPolicy hit(input_width(env, Observability::full), {1, 0, 0, 0});
  const auto ds = build_dataset(stand, hit, env, {10, 4, 6}, 100);
  CHECK(ds.train.size() == 20);
  CHECK(ds.valid.size() == 8);
  CHECK(ds.test.size() == 12);
  for (const auto* split : {&ds.train, &ds.valid, &ds.test}) {
    int pos = 0;
    for (const auto& s : *split) {
      pos += s.label;
      CHECK(s.input.size() == detector_width(env));
      if (s.label == 0) CHECK(s.length == 1.0);
    }
    CHECK(2 * pos == static_cast<int>(split->size()));
  }
  CHECK_THROWS_AS(build_dataset(stand, hit, env, {0, 4, 6}, 0), ConfigError);
}

TEST_CASE("variant names") {
  for (auto v : {DetectorVariant::trajectory, DetectorVariant::length, DetectorVariant::reward})
    CHECK(parse_detector_variant(to_string(v)) == v);
  CHECK_THROWS_AS(parse_detector_variant("oracle"), ConfigError);
}
