#include "attnkit/ml/inference.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "attnkit/common.hpp"
#include "attnkit/stats.hpp"

namespace attnkit::ml {

WelchResult welch_t(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() < 2 || y.size() < 2) throw Error("welch_t: each group needs at least two values");
    const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
    const double vx = stats::variance(x), vy = stats::variance(y);
    if (!std::isfinite(vx) || !std::isfinite(vy)) throw Error("welch_t: non-finite variance");
    if (vx == 0.0 && vy == 0.0) throw Error("welch_t: both groups have zero variance");
    const double ax = vx / nx, ay = vy / ny;
    WelchResult r;
    r.t = (stats::mean(x) - stats::mean(y)) / std::sqrt(ax + ay);
    r.df = (ax + ay) * (ax + ay) / (ax * ax / (nx - 1.0) + ay * ay / (ny - 1.0));
    return r;
}

OlsResult ols_fit(const Matrix& x, const std::vector<double>& y, const std::vector<std::string>& names) {
    if (x.rows != y.size()) throw Error("ols_fit: response length does not match the rows");
    if (x.rows <= x.cols) throw Error("ols_fit: need more rows than columns");
    Eigen::MatrixXd a(static_cast<Eigen::Index>(x.rows), static_cast<Eigen::Index>(x.cols));
    for (std::size_t r = 0; r < x.rows; ++r)
        for (std::size_t c = 0; c < x.cols; ++c) a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = x(r, c);
    const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size()));

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    qr.setThreshold(1e-10);
    if (qr.rank() < a.cols()) {
        // Columns pivoted past the rank are linear combinations of the earlier ones.
        std::string dep;
        const auto& perm = qr.colsPermutation().indices();
        for (Eigen::Index i = qr.rank(); i < a.cols(); ++i) {
            const auto c = static_cast<std::size_t>(perm(i));
            if (!dep.empty()) dep += ", ";
            dep += c < names.size() ? names[c] : "column " + std::to_string(c);
        }
        throw Error("ols_fit: design matrix is rank deficient; dependent columns: " + dep);
    }
    const Eigen::VectorXd beta = qr.solve(b);
    OlsResult r;
    r.coefficients.assign(beta.data(), beta.data() + beta.size());
    const Eigen::VectorXd resid = b - a * beta;
    const double mean = b.mean();
    const double ss_tot = (b.array() - mean).square().sum();
    const double ss_res = resid.squaredNorm();
    r.r_squared = ss_tot > 0.0 ? std::clamp(1.0 - ss_res / ss_tot, 0.0, 1.0) : 0.0;
    return r;
}

}  // namespace attnkit::ml
