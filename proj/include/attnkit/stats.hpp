#pragma once

#include <span>
#include <vector>

#include "attnkit/common.hpp"

// Small numeric helpers shared across modules.
namespace attnkit::stats {

double mean(std::span<const double> x);
// Sample variance (n - 1); 0 for fewer than two values.
double variance(std::span<const double> x);
double stddev(std::span<const double> x);
// Population variance (n).
double population_variance(std::span<const double> x);

// Linear-interpolation quantile of sorted data (the default of R and NumPy).
double quantile_sorted(std::span<const double> sorted, double q);
// Inverse of the empirical CDF, averaging at jumps (Hyndman-Fan type 2). Depends on
// the data only through its ECDF, so duplicating a sample leaves it unchanged.
double ecdf_quantile_sorted(std::span<const double> sorted, double q);
double median(std::vector<double> x);

// Pearson correlation; missing when either side has zero variance or n < 2.
MaybeReal pearson(std::span<const double> x, std::span<const double> y);

// z = (x - mean) / sd with sample sd; all zeros when sd is 0.
std::vector<double> zscore(std::span<const double> x);

}  // namespace attnkit::stats
