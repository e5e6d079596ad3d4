#include "attnkit/ml/importance.hpp"

#include <algorithm>
#include <numeric>

#include "attnkit/ml/metrics.hpp"
#include "attnkit/random.hpp"

namespace attnkit::ml {

namespace {

double auc_pr_or_zero(const TrainedModel& model, const Matrix& x, const std::vector<int>& y) {
    return average_precision(model.predict(x), y).value_or(0.0);
}

double column_importance(const TrainedModel& model, const Matrix& x, const std::vector<int>& y, std::size_t c,
                         double baseline, std::size_t repeats, std::uint64_t seed) {
    Matrix work = x;
    std::vector<double> col = x.column(c);
    double sum = 0.0;
    for (std::size_t r = 0; r < repeats; ++r) {
        Rng rng(derive_seed(derive_seed(seed, c), r));
        std::vector<double> perm = col;
        shuffle(std::span<double>(perm), rng);
        for (std::size_t i = 0; i < x.rows; ++i) work(i, c) = perm[i];
        sum += auc_pr_or_zero(model, work, y);
    }
    return baseline - sum / static_cast<double>(repeats);
}

void check(const TrainedModel& model, const Matrix& x, const std::vector<int>& y, std::size_t repeats) {
    if (x.rows != y.size()) throw Error("permutation_importance: label count does not match the rows");
    if (x.cols != model.n_features()) throw Error("permutation_importance: feature count does not match the model");
    if (repeats == 0) throw Error("permutation_importance: repeats must be positive");
}

}  // namespace

std::vector<double> permutation_importance(const TrainedModel& model, const Matrix& x, const std::vector<int>& y,
                                           std::size_t repeats, std::uint64_t seed) {
    check(model, x, y, repeats);
    const double baseline = auc_pr_or_zero(model, x, y);
    std::vector<double> out(x.cols);
    const auto n = static_cast<std::ptrdiff_t>(x.cols);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t c = 0; c < n; ++c)
        out[static_cast<std::size_t>(c)] =
            column_importance(model, x, y, static_cast<std::size_t>(c), baseline, repeats, seed);
    return out;
}

std::vector<double> permutation_importance_serial(const TrainedModel& model, const Matrix& x,
                                                  const std::vector<int>& y, std::size_t repeats, std::uint64_t seed) {
    check(model, x, y, repeats);
    const double baseline = auc_pr_or_zero(model, x, y);
    std::vector<double> out(x.cols);
    for (std::size_t c = 0; c < x.cols; ++c) out[c] = column_importance(model, x, y, c, baseline, repeats, seed);
    return out;
}

std::vector<std::size_t> top_k(const std::vector<double>& importance, std::size_t k) {
    std::vector<std::size_t> idx(importance.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
    idx.resize(std::min(k, idx.size()));
    return idx;
}

}  // namespace attnkit::ml
