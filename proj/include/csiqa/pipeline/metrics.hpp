#pragma once

#include <span>
#include <vector>

namespace csiqa::pipeline {

// Pearson linear correlation. Throws UndefinedCorrelation when either input
// has zero variance and ContractError on length < 2 or mismatch.
double plcc(std::span<const double> x, std::span<const double> y);

// 1-based ranks; tied values share the average of the ranks they span.
std::vector<double> average_ranks(std::span<const double> x);

// Spearman rank correlation: Pearson correlation of average ranks.
double srcc(std::span<const double> x, std::span<const double> y);

}  // namespace csiqa::pipeline
