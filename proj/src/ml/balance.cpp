#include "attnkit/ml/balance.hpp"

#include <algorithm>
#include <map>

#include "attnkit/common.hpp"
#include "attnkit/random.hpp"

namespace attnkit::ml {

const char* to_string(BalanceMethod m) {
    switch (m) {
        case BalanceMethod::None: return "none";
        case BalanceMethod::RandomOversample: return "random_oversample";
        case BalanceMethod::Smote: return "smote";
    }
    return "none";
}

BalanceMethod balance_method_from_string(const std::string& s) {
    for (BalanceMethod m : {BalanceMethod::None, BalanceMethod::RandomOversample, BalanceMethod::Smote})
        if (s == to_string(m)) return m;
    throw Error("unknown balancing method '" + s + "'");
}

namespace {

double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

// k nearest same-class rows of each member, ties by lower row index.
std::vector<std::vector<std::size_t>> neighbours(const Matrix& x, const std::vector<std::size_t>& members,
                                                 std::size_t k) {
    std::vector<std::vector<std::size_t>> out(members.size());
    for (std::size_t i = 0; i < members.size(); ++i) {
        std::vector<std::pair<double, std::size_t>> d;
        for (std::size_t j = 0; j < members.size(); ++j)
            if (j != i) d.push_back({squared_distance(x.row(members[i]), x.row(members[j])), members[j]});
        const std::size_t m = std::min(k, d.size());
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(m), d.end());
        for (std::size_t t = 0; t < m; ++t) out[i].push_back(d[t].second);
    }
    return out;
}

}  // namespace

Balanced balance(const Matrix& x, const std::vector<int>& y, BalanceMethod method, std::size_t k, std::uint64_t seed) {
    if (x.rows != y.size()) throw Error("balance: label count does not match the rows");
    std::map<int, std::vector<std::size_t>> classes;
    for (std::size_t i = 0; i < y.size(); ++i) classes[y[i]].push_back(i);
    if (classes.size() < 2) throw Error("balance: only one class present");

    Balanced out{x, y, x.rows};
    if (method == BalanceMethod::None) return out;
    std::size_t target = 0;
    for (const auto& [label, rows] : classes) target = std::max(target, rows.size());

    Rng rng(seed);
    std::vector<double> synthetic;
    for (const auto& [label, rows] : classes) {
        if (rows.size() == target) continue;
        const std::size_t need = target - rows.size();
        BalanceMethod m = method;
        if (m == BalanceMethod::Smote && rows.size() < 2) {
            warn("balance: class " + std::to_string(label) + " has fewer than 2 rows; using random oversampling");
            m = BalanceMethod::RandomOversample;
        }
        std::vector<std::vector<std::size_t>> nb;
        if (m == BalanceMethod::Smote) nb = neighbours(x, rows, std::max<std::size_t>(k, 1));
        for (std::size_t s = 0; s < need; ++s) {
            const std::size_t i = uniform_index(rng, rows.size());
            const auto base = x.row(rows[i]);
            if (m == BalanceMethod::RandomOversample) {
                synthetic.insert(synthetic.end(), base.begin(), base.end());
            } else {
                const auto other = x.row(nb[i][uniform_index(rng, nb[i].size())]);
                const double u = uniform01(rng);
                for (std::size_t c = 0; c < x.cols; ++c) synthetic.push_back(base[c] + u * (other[c] - base[c]));
            }
            out.y.push_back(label);
        }
    }
    out.x.data.insert(out.x.data.end(), synthetic.begin(), synthetic.end());
    out.x.rows = out.y.size();
    return out;
}

}  // namespace attnkit::ml
