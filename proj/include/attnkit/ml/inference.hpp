#pragma once

#include <optional>
#include <string>
#include <vector>

#include "attnkit/ml/matrix.hpp"

namespace attnkit::ml {

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
};

// Welch's unequal-variance t statistic and Welch-Satterthwaite degrees of freedom.
WelchResult welch_t(const std::vector<double>& x, const std::vector<double>& y);

struct OlsResult {
    std::vector<double> coefficients;
    double r_squared = 0.0;
};

// Least squares via column-pivoted QR. X must already hold the intercept column.
// Throws on N <= columns or rank deficiency (naming the dependent columns).
OlsResult ols_fit(const Matrix& x, const std::vector<double>& y, const std::vector<std::string>& column_names = {});

}  // namespace attnkit::ml
