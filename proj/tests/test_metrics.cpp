#include <doctest.h>

#include <cmath>
#include <vector>

#include "espsim/errors.hpp"
#include "espsim/metrics.hpp"
#include "espsim/rng.hpp"

using namespace espsim;

namespace {

// Rank of item i under the documented order: descending score, ties by input index.
std::size_t stable_rank(const std::vector<double>& s, std::size_t i) {
  std::size_t rank = 1;
  for (std::size_t j = 0; j < s.size(); ++j)
    if (s[j] > s[i] || (s[j] == s[i] && j < i)) ++rank;
  return rank;
}

double brute_ap(const std::vector<int>& y, const std::vector<double>& s) {
  double total = 0.0;
  int positives = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (!y[i]) continue;
    ++positives;
    const std::size_t k = stable_rank(s, i);
    std::size_t hits = 0;
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[j] && stable_rank(s, j) <= k) ++hits;
    total += static_cast<double>(hits) / static_cast<double>(k);
  }
  return total / positives;
}

double brute_auroc(const std::vector<int>& y, const std::vector<double>& s) {
  double wins = 0.0, pairs = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i)
    for (std::size_t j = 0; j < y.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        pairs += 1.0;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / pairs;
}

}  // namespace

TEST_CASE("metric worked examples") {
  const std::vector<int> y2{1, 0};
  const std::vector<double> s2{0.9, 0.1};
  CHECK(average_precision(y2, s2) == 1.0);
  CHECK(auroc(y2, s2) == 1.0);

  const std::vector<int> y{1, 1, 0, 0};
  const std::vector<double> s{0.8, 0.4, 0.6, 0.2};
  CHECK(average_precision(y, s) == doctest::Approx(5.0 / 6.0));
  CHECK(auroc(y, s) == doctest::Approx(0.75));

  const std::vector<double> flat{0.3, 0.3, 0.3, 0.3};
  CHECK(auroc(y, flat) == 0.5);
}

TEST_CASE("ties keep input order in average precision") {
  const std::vector<double> s{0.5, 0.5};
  CHECK(average_precision(std::vector<int>{1, 0}, s) == 1.0);
  CHECK(average_precision(std::vector<int>{0, 1}, s) == 0.5);
}

TEST_CASE("metrics match brute force on every small instance") {
  // All label patterns and all scores from a 3-level alphabet, n = 1..6.
  for (int n = 2; n <= 6; ++n) {
    int levels = 1;
    for (int i = 0; i < n; ++i) levels *= 3;
    for (int code = 0; code < levels; ++code) {
      std::vector<double> s(static_cast<std::size_t>(n));
      int c = code;
      for (auto& v : s) {
        v = 0.25 * (c % 3);
        c /= 3;
      }
      for (int mask = 1; mask < (1 << n); ++mask) {
        std::vector<int> y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = (mask >> i) & 1;
        REQUIRE(average_precision(y, s) == doctest::Approx(brute_ap(y, s)).epsilon(1e-12));
        if (mask != (1 << n) - 1) {
          const double a = brute_auroc(y, s);
          REQUIRE(auroc_pairs(y, s) == doctest::Approx(a).epsilon(1e-12));
          REQUIRE(auroc_midrank(y, s) == doctest::Approx(a).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("random instances up to n = 8 and pair count vs midrank up to 50") {
  Rng rng(11);
  for (int trial = 0; trial < 3000; ++trial) {
    const auto n = static_cast<std::size_t>(2 + rng.below(trial < 1500 ? 7 : 49));
    std::vector<int> y(n);
    std::vector<double> s(n);
    const auto alphabet = 1 + rng.below(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      s[i] = static_cast<double>(rng.below(alphabet));
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(auroc_pairs(y, s) == doctest::Approx(auroc_midrank(y, s)).epsilon(1e-12));
    if (n <= 8) {
      CHECK(average_precision(y, s) == doctest::Approx(brute_ap(y, s)).epsilon(1e-12));
      CHECK(auroc(y, s) == doctest::Approx(brute_auroc(y, s)).epsilon(1e-12));
    }
  }
}

TEST_CASE("metrics are invariant under increasing transforms") {
  Rng rng(12);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 30;
    std::vector<int> y(n);
    std::vector<double> s(n), t(n);
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = static_cast<int>(rng.below(2));
      s[i] = std::round(rng.normal() * 4.0) / 4.0;
      t[i] = std::exp(3.0 * s[i]) + 7.0;
    }
    y[0] = 1;
    y[1] = 0;
    CHECK(average_precision(y, s) == average_precision(y, t));
    CHECK(auroc(y, s) == auroc(y, t));
  }
}

TEST_CASE("label-blind coin scores give chance-level metrics") {
  Rng rng(13);
  const std::size_t n = 20000;
  std::vector<int> y(n);
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % 2);
    s[i] = rng.uniform();
  }
  CHECK(std::abs(average_precision(y, s) - 0.5) < 0.05);
  CHECK(std::abs(auroc(y, s) - 0.5) < 0.05);
}

TEST_CASE("metric errors") {
  const std::vector<double> s{0.1, 0.2};
  CHECK_THROWS_AS(average_precision(std::vector<int>{0, 0}, s), ConfigError);
  CHECK_THROWS_AS(auroc(std::vector<int>{1, 1}, s), ConfigError);
  CHECK_THROWS_AS(auroc(std::vector<int>{1}, s), ConfigError);
  CHECK_THROWS_AS(auroc(std::vector<int>{1, 2}, s), ConfigError);
}

TEST_CASE("summary statistics") {
  const std::vector<double> v{0.1, 0.2, 0.3};
  CHECK(mean(v) == doctest::Approx(0.2));
  CHECK(population_stdev(v) == doctest::Approx(0.0816497).epsilon(1e-6));
  CHECK(sample_stdev(v) == doctest::Approx(0.1));
  CHECK(sample_stdev(std::vector<double>{4.0}) == 0.0);
  CHECK(median(std::vector<double>{3, 1, 2}) == 2.0);
  CHECK(median(std::vector<double>{4, 1, 2, 3}) == 2.5);
  CHECK(midranks(std::vector<double>{5, 1, 5, 3}) == std::vector<double>{3.5, 1, 3.5, 2});
  const std::vector<double> x{0.01, 0.1, 1, 10};
  CHECK(spearman(x, std::vector<double>{0.9, 0.8, 0.7, 0.6}) == doctest::Approx(-1.0));
  CHECK(spearman(x, std::vector<double>{0.9, 0.7, 0.8, 0.6}) == doctest::Approx(-0.8));
  CHECK(spearman(x, std::vector<double>{1, 1, 1, 1}) == 0.0);
}
