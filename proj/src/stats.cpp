#include "attnkit/stats.hpp"

#include <algorithm>
#include <cmath>

namespace attnkit::stats {

double mean(std::span<const double> x) {
    if (x.empty()) return 0.0;
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

namespace {

double sum_sq_dev(std::span<const double> x) {
    const double m = mean(x);
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return ss;
}

}  // namespace

double variance(std::span<const double> x) {
    if (x.size() < 2) return 0.0;
    return sum_sq_dev(x) / static_cast<double>(x.size() - 1);
}

double stddev(std::span<const double> x) { return std::sqrt(variance(x)); }

double population_variance(std::span<const double> x) {
    if (x.empty()) return 0.0;
    return sum_sq_dev(x) / static_cast<double>(x.size());
}

double quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) return 0.0;
    const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double ecdf_quantile_sorted(std::span<const double> sorted, double q) {
    if (sorted.empty()) return 0.0;
    const std::size_t n = sorted.size();
    const double np = static_cast<double>(n) * q;
    const auto j = static_cast<std::size_t>(std::floor(np));
    auto at = [&](std::size_t k) { return sorted[std::clamp<std::size_t>(k, 1, n) - 1]; };  // 1-based
    if (np > static_cast<double>(j)) return at(j + 1);
    return 0.5 * (at(j) + at(j + 1));
}

double median(std::vector<double> x) {
    std::sort(x.begin(), x.end());
    return quantile_sorted(x, 0.5);
}

MaybeReal pearson(std::span<const double> x, std::span<const double> y) {
    const std::size_t n = std::min(x.size(), y.size());
    if (n < 2) return std::nullopt;
    const double mx = mean(x.first(n));
    const double my = mean(y.first(n));
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx <= 0.0 || syy <= 0.0) return std::nullopt;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

std::vector<double> zscore(std::span<const double> x) {
    const double m = mean(x);
    const double sd = stddev(x);
    std::vector<double> out(x.size(), 0.0);
    if (sd > 0.0)
        for (std::size_t i = 0; i < x.size(); ++i) out[i] = (x[i] - m) / sd;
    return out;
}

}  // namespace attnkit::stats
