#pragma once

#include <cstdint>
#include <vector>

#include "attnkit/ml/matrix.hpp"
#include "attnkit/ml/model.hpp"

namespace attnkit::ml {

// Baseline AUC-PR minus the mean AUC-PR after permuting each column, `repeats`
// times per column. Column permutations use seeds derived from (seed, column,
// repeat), so the parallel kernel and the serial reference agree exactly.
std::vector<double> permutation_importance(const TrainedModel& model, const Matrix& x, const std::vector<int>& y,
                                           std::size_t repeats, std::uint64_t seed);
std::vector<double> permutation_importance_serial(const TrainedModel& model, const Matrix& x,
                                                  const std::vector<int>& y, std::size_t repeats, std::uint64_t seed);

// Indices of the k largest importances (ties by lower index), in that order.
std::vector<std::size_t> top_k(const std::vector<double>& importance, std::size_t k);

}  // namespace attnkit::ml
