#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "attnkit/ml/matrix.hpp"

namespace attnkit::ml {

enum class BalanceMethod { None, RandomOversample, Smote };
const char* to_string(BalanceMethod m);
BalanceMethod balance_method_from_string(const std::string& s);

struct Balanced {
    Matrix x;
    std::vector<int> y;
    std::size_t original_rows = 0;  // rows [0, original_rows) are the input, unchanged
};

// Grows every smaller class to the size of the largest one. Random oversampling
// duplicates rows drawn with replacement; SMOTE interpolates x + u * (nb - x) toward
// one of the k nearest same-class rows. SMOTE on a class with fewer than two rows
// falls back to oversampling with a warning. Throws when only one class is present.
Balanced balance(const Matrix& x, const std::vector<int>& y, BalanceMethod method, std::size_t k, std::uint64_t seed);

}  // namespace attnkit::ml
