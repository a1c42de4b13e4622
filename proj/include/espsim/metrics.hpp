#pragma once

#include <span>
#include <vector>

namespace espsim {

// Ranking metrics over binary labels (1 = cheater) and detector scores.
//
// Average precision sorts by descending score; tied scores keep their input
// order, so ties are resolved in favour of whichever sample came first.
// Throws ConfigError when there is no positive label.
double average_precision(std::span<const int> labels, std::span<const double> scores);

// Mann-Whitney AUROC, P(s+ > s-) + P(s+ == s-)/2. Both classes must be present.
double auroc(std::span<const int> labels, std::span<const double> scores);
double auroc_pairs(std::span<const int> labels, std::span<const double> scores);
double auroc_midrank(std::span<const int> labels, std::span<const double> scores);

// Midranks (1-based) with ties sharing their mean rank.
std::vector<double> midranks(std::span<const double> values);

double mean(std::span<const double> values);
double population_stdev(std::span<const double> values);
double sample_stdev(std::span<const double> values);
double median(std::span<const double> values);
double spearman(std::span<const double> x, std::span<const double> y);

}  // namespace espsim
