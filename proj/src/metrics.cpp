#include "espsim/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "espsim/errors.hpp"

namespace espsim {

namespace {

void check_aligned(std::span<const int> labels, std::span<const double> scores) {
  if (labels.size() != scores.size()) throw ConfigError("labels and scores must have the same length");
  for (int y : labels)
    if (y != 0 && y != 1) throw ConfigError("labels must be 0 or 1");
}

std::pair<std::size_t, std::size_t> class_counts(std::span<const int> labels) {
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
  return {pos, labels.size() - pos};
}

}  // namespace

double average_precision(std::span<const int> labels, std::span<const double> scores) {
  check_aligned(labels, scores);
  const auto [pos, neg] = class_counts(labels);
  if (pos == 0) throw ConfigError("average precision is undefined without positives");
  std::vector<std::size_t> order(labels.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    if (labels[order[k]] == 1) {
      ++hits;
      sum += static_cast<double>(hits) / static_cast<double>(k + 1);
    }
  }
  return sum / static_cast<double>(pos);
}

double auroc_pairs(std::span<const int> labels, std::span<const double> scores) {
  check_aligned(labels, scores);
  const auto [pos, neg] = class_counts(labels);
  if (pos == 0 || neg == 0) throw ConfigError("AUROC needs both classes");
  double wins = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 1) continue;
    for (std::size_t j = 0; j < labels.size(); ++j) {
      if (labels[j] != 0) continue;
      if (scores[i] > scores[j])
        wins += 1.0;
      else if (scores[i] == scores[j])
        wins += 0.5;
    }
  }
  return wins / (static_cast<double>(pos) * static_cast<double>(neg));
}

double auroc_midrank(std::span<const int> labels, std::span<const double> scores) {
  check_aligned(labels, scores);
  const auto [pos, neg] = class_counts(labels);
  if (pos == 0 || neg == 0) throw ConfigError("AUROC needs both classes");
  const auto ranks = midranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == 1) rank_sum += ranks[i];
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

double auroc(std::span<const int> labels, std::span<const double> scores) { return auroc_midrank(labels, scores); }

std::vector<double> midranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

double mean(std::span<const double> values) {
  if (values.empty()) throw ConfigError("mean of an empty sequence");
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

namespace {

double sum_sq_dev(std::span<const double> values) {
  const double m = mean(values);
  double s = 0.0;
  for (double v : values) s += (v - m) * (v - m);
  return s;
}

}  // namespace

double population_stdev(std::span<const double> values) {
  return std::sqrt(sum_sq_dev(values) / static_cast<double>(values.size()));
}

double sample_stdev(std::span<const double> values) {
  if (values.size() < 2) return 0.0;
  return std::sqrt(sum_sq_dev(values) / static_cast<double>(values.size() - 1));
}

double median(std::span<const double> values) {
  if (values.empty()) throw ConfigError("median of an empty sequence");
  std::vector<double> v(values.begin(), values.end());
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("spearman needs two aligned sequences of length >= 2");
  const auto rx = midranks(x);
  const auto ry = midranks(y);
  const double mx = mean(rx), my = mean(ry);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

}  // namespace espsim
