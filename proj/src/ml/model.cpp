#include "attnkit/ml/model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <set>

#include "attnkit/common.hpp"
#include "attnkit/random.hpp"

namespace attnkit::ml {

const char* to_string(ModelKind k) {
    return k == ModelKind::LogisticRegression ? "logistic_regression" : "random_forest";
}

ModelKind model_kind_from_string(const std::string& s) {
    if (s == "logistic_regression") return ModelKind::LogisticRegression;
    if (s == "random_forest") return ModelKind::RandomForest;
    throw Error("unknown model kind '" + s + "'");
}

namespace {

std::size_t features_per_split(const std::string& rule, std::size_t p) {
    if (p == 0) return 0;
    if (rule == "sqrt") return std::max<std::size_t>(1, static_cast<std::size_t>(std::sqrt(static_cast<double>(p))));
    if (rule == "log2") return std::max<std::size_t>(1, static_cast<std::size_t>(std::log2(static_cast<double>(p))));
    if (rule == "all") return p;
    std::size_t v = 0;
    const auto r = std::from_chars(rule.data(), rule.data() + rule.size(), v);
    if (r.ec != std::errc() || r.ptr != rule.data() + rule.size() || v == 0)
        throw Error("max_features must be sqrt, log2, all or a positive integer");
    return std::min(v, p);
}

}  // namespace

void ModelSpec::validate() const {
    if (trees < 1 || trees > 100000) throw Error("model: trees must lie in [1, 100000]");
    if (max_depth < 1 || max_depth > 10000) throw Error("model: max_depth must lie in [1, 10000]");
    features_per_split(max_features, 1);
    if (!(l2 >= 0.0) || !std::isfinite(l2)) throw Error("model: l2 must be a finite non-negative number");
    if (epochs < 1) throw Error("model: epochs must be positive");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw Error("model: learning_rate must be positive");
}

nlohmann::json to_json(const ModelSpec& s) {
    return {{"kind", to_string(s.kind)},
            {"trees", s.trees},
            {"max_depth", s.max_depth},
            {"max_features", s.max_features},
            {"bootstrap", s.bootstrap},
            {"l2", s.l2},
            {"epochs", s.epochs},
            {"learning_rate", s.learning_rate},
            {"class_weighting", s.class_weighting},
            {"seed", s.seed}};
}

ModelSpec model_spec_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw Error("model spec must be a JSON object");
    static const std::set<std::string> known{"kind",   "trees",         "max_depth",       "max_features",
                                             "bootstrap", "l2",         "epochs",          "learning_rate",
                                             "class_weighting", "seed"};
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw Error("model spec: unknown key '" + key + "'");
    ModelSpec s;
    if (j.contains("kind")) s.kind = model_kind_from_string(j.at("kind").get<std::string>());
    if (j.contains("trees")) s.trees = j.at("trees").get<std::size_t>();
    if (j.contains("max_depth")) s.max_depth = j.at("max_depth").get<std::size_t>();
    if (j.contains("max_features")) {
        const auto& v = j.at("max_features");
        s.max_features = v.is_number_integer() ? std::to_string(v.get<std::size_t>()) : v.get<std::string>();
    }
    if (j.contains("bootstrap")) s.bootstrap = j.at("bootstrap").get<bool>();
    if (j.contains("l2")) s.l2 = j.at("l2").get<double>();
    if (j.contains("epochs")) s.epochs = j.at("epochs").get<std::size_t>();
    if (j.contains("learning_rate")) s.learning_rate = j.at("learning_rate").get<double>();
    if (j.contains("class_weighting")) s.class_weighting = j.at("class_weighting").get<bool>();
    if (j.contains("seed")) s.seed = j.at("seed").get<std::uint64_t>();
    s.validate();
    return s;
}

double Tree::predict(std::span<const double> row) const {
    int n = 0;
    while (nodes[static_cast<std::size_t>(n)].feature >= 0) {
        const TreeNode& node = nodes[static_cast<std::size_t>(n)];
        n = row[static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left : node.right;
    }
    return nodes[static_cast<std::size_t>(n)].value;
}

namespace {

double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

struct TrainingData {
    const Matrix& x;
    const std::vector<int>& y;
    std::vector<double> class_weight;  // indexed by label
};

TrainingData prepare(const Matrix& x, const std::vector<int>& y, const ModelSpec& spec) {
    spec.validate();
    if (x.rows != y.size()) throw Error("train: label count does not match the rows");
    if (x.rows == 0) throw Error("train: no rows");
    for (double v : x.data)
        if (!std::isfinite(v)) throw Error("train: matrix holds a non-finite value");
    std::size_t n1 = 0;
    for (int l : y) {
        if (l != 0 && l != 1) throw Error("train: labels must be 0 or 1");
        n1 += static_cast<std::size_t>(l);
    }
    const std::size_t n0 = y.size() - n1;
    if (n0 == 0 || n1 == 0) throw Error("train: only one class present in the training labels");
    TrainingData d{x, y, {1.0, 1.0}};
    if (spec.class_weighting) {
        const double n = static_cast<double>(y.size());
        d.class_weight = {n / (2.0 * static_cast<double>(n0)), n / (2.0 * static_cast<double>(n1))};
    }
    return d;
}

class TreeBuilder {
public:
    TreeBuilder(const TrainingData& d, const ModelSpec& spec, std::uint64_t seed)
        : d_(d), spec_(spec), rng_(seed), mtry_(features_per_split(spec.max_features, d.x.cols)) {}

    Tree build() {
        std::vector<std::size_t> sample(d_.x.rows);
        if (spec_.bootstrap) {
            for (auto& s : sample) s = uniform_index(rng_, d_.x.rows);
        } else {
            std::iota(sample.begin(), sample.end(), std::size_t{0});
        }
        grow(sample, 0);
        return std::move(tree_);
    }

private:
    struct Split {
        int feature = -1;
        double threshold = 0.0;
        double score = -std::numeric_limits<double>::infinity();
    };

    int grow(std::vector<std::size_t>& sample, std::size_t depth) {
        double w0 = 0.0, w1 = 0.0;
        for (std::size_t i : sample) (d_.y[i] ? w1 : w0) += d_.class_weight[static_cast<std::size_t>(d_.y[i])];
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.push_back({});
        tree_.nodes.back().value = w1 / (w0 + w1);
        if (depth >= spec_.max_depth || w0 == 0.0 || w1 == 0.0 || sample.size() < 2) return id;

        const Split s = best_split(sample);
        if (s.feature < 0) return id;
        std::vector<std::size_t> left, right;
        for (std::size_t i : sample)
            (d_.x(i, static_cast<std::size_t>(s.feature)) <= s.threshold ? left : right).push_back(i);
        sample.clear();
        sample.shrink_to_fit();
        const int l = grow(left, depth + 1);
        const int r = grow(right, depth + 1);
        TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
        node.feature = s.feature;
        node.threshold = s.threshold;
        node.left = l;
        node.right = r;
        return id;
    }

    // Features are visited in random order until mtry of them have shown a usable
    // split point; constant features do not count toward the budget.
    Split best_split(const std::vector<std::size_t>& sample) {
        std::vector<std::size_t> order(d_.x.cols);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Split best;
        std::size_t tried = 0;
        std::vector<std::pair<double, std::size_t>> vals(sample.size());
        for (std::size_t k = 0; k < order.size() && tried < mtry_; ++k) {
            const std::size_t pick = k + uniform_index(rng_, order.size() - k);
            std::swap(order[k], order[pick]);
            const std::size_t f = order[k];
            for (std::size_t t = 0; t < sample.size(); ++t) vals[t] = {d_.x(sample[t], f), sample[t]};
            std::sort(vals.begin(), vals.end());
            if (vals.front().first == vals.back().first) continue;
            ++tried;

            double t0 = 0.0, t1 = 0.0;
            for (const auto& [v, i] : vals) (d_.y[i] ? t1 : t0) += d_.class_weight[static_cast<std::size_t>(d_.y[i])];
            double l0 = 0.0, l1 = 0.0;
            for (std::size_t t = 0; t + 1 < vals.size(); ++t) {
                const std::size_t i = vals[t].second;
                (d_.y[i] ? l1 : l0) += d_.class_weight[static_cast<std::size_t>(d_.y[i])];
                if (vals[t].first == vals[t + 1].first) continue;
                const double r0 = t0 - l0, r1 = t1 - l1;
                // Maximizing this is equivalent to minimizing the weighted child Gini impurity.
                const double score = (l0 * l0 + l1 * l1) / (l0 + l1) + (r0 * r0 + r1 * r1) / (r0 + r1);
                if (score > best.score) {
                    best.score = score;
                    best.feature = static_cast<int>(f);
                    double mid = 0.5 * (vals[t].first + vals[t + 1].first);
                    if (!(mid < vals[t + 1].first)) mid = vals[t].first;
                    best.threshold = mid;
                }
            }
        }
        return best;
    }

    const TrainingData& d_;
    const ModelSpec& spec_;
    Rng rng_;
    std::size_t mtry_;
    Tree tree_;
};

bool any_varying_column(const Matrix& x) {
    for (std::size_t c = 0; c < x.cols; ++c)
        for (std::size_t r = 1; r < x.rows; ++r)
            if (x(r, c) != x(0, c)) return true;
    return false;
}

double weighted_prior(const TrainingData& d) {
    double w0 = 0.0, w1 = 0.0;
    for (int l : d.y) (l ? w1 : w0) += d.class_weight[static_cast<std::size_t>(l)];
    return w1 / (w0 + w1);
}

Tree stump(double value) {
    Tree t;
    t.nodes.push_back({});
    t.nodes.back().value = value;
    return t;
}

void fit_logistic(const TrainingData& d, const ModelSpec& spec, std::vector<double>& w, double& b) {
    const std::size_t n = d.x.rows, p = d.x.cols;
    const double prior = weighted_prior(d);
    w.assign(p, 0.0);
    b = std::log(prior / (1.0 - prior));
    std::vector<double> grad(p);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        double grad_b = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const auto row = d.x.row(i);
            double z = b;
            for (std::size_t c = 0; c < p; ++c) z += w[c] * row[c];
            const double r = d.class_weight[static_cast<std::size_t>(d.y[i])] * (sigmoid(z) - d.y[i]);
            for (std::size_t c = 0; c < p; ++c) grad[c] += r * row[c];
            grad_b += r;
        }
        for (std::size_t c = 0; c < p; ++c) w[c] -= spec.learning_rate * inv_n * (grad[c] + spec.l2 * w[c]);
        b -= spec.learning_rate * inv_n * grad_b;
    }
}

}  // namespace

TrainedModel train(const Matrix& x, const std::vector<int>& y, const ModelSpec& spec) {
    const TrainingData d = prepare(x, y, spec);
    TrainedModel m;
    m.spec_ = spec;
    m.n_features_ = x.cols;
    if (spec.kind == ModelKind::LogisticRegression) {
        fit_logistic(d, spec, m.coef_, m.intercept_);
        return m;
    }
    m.trees_.resize(spec.trees);
    if (!any_varying_column(x)) {
        std::fill(m.trees_.begin(), m.trees_.end(), stump(weighted_prior(d)));
        return m;
    }
    const auto n = static_cast<std::ptrdiff_t>(spec.trees);
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t t = 0; t < n; ++t)
        m.trees_[static_cast<std::size_t>(t)] =
            TreeBuilder(d, spec, derive_seed(spec.seed, static_cast<std::uint64_t>(t))).build();
    return m;
}

TrainedModel train_serial(const Matrix& x, const std::vector<int>& y, const ModelSpec& spec) {
    const TrainingData d = prepare(x, y, spec);
    TrainedModel m;
    m.spec_ = spec;
    m.n_features_ = x.cols;
    if (spec.kind == ModelKind::LogisticRegression) {
        fit_logistic(d, spec, m.coef_, m.intercept_);
        return m;
    }
    if (!any_varying_column(x)) {
        m.trees_.assign(spec.trees, stump(weighted_prior(d)));
        return m;
    }
    for (std::size_t t = 0; t < spec.trees; ++t) m.trees_.push_back(TreeBuilder(d, spec, derive_seed(spec.seed, t)).build());
    return m;
}

std::vector<double> TrainedModel::predict(const Matrix& x) const {
    if (x.cols != n_features_)
        throw Error("predict: model expects " + std::to_string(n_features_) + " features, got " + std::to_string(x.cols));
    std::vector<double> out(x.rows);
    for (std::size_t r = 0; r < x.rows; ++r) {
        const auto row = x.row(r);
        if (spec_.kind == ModelKind::LogisticRegression) {
            double z = intercept_;
            for (std::size_t c = 0; c < coef_.size(); ++c) z += coef_[c] * row[c];
            out[r] = sigmoid(z);
        } else {
            double s = 0.0;
            for (const Tree& t : trees_) s += t.predict(row);
            out[r] = s / static_cast<double>(trees_.size());
        }
    }
    return out;
}

nlohmann::json TrainedModel::to_json() const {
    nlohmann::json j{{"format", "attnkit-model"}, {"spec", ml::to_json(spec_)}, {"n_features", n_features_}};
    if (spec_.kind == ModelKind::LogisticRegression) {
        j["coefficients"] = coef_;
        j["intercept"] = intercept_;
        return j;
    }
    nlohmann::json trees = nlohmann::json::array();
    for (const Tree& t : trees_) {
        nlohmann::json feature = nlohmann::json::array(), threshold = nlohmann::json::array(),
                       left = nlohmann::json::array(), right = nlohmann::json::array(), value = nlohmann::json::array();
        for (const TreeNode& n : t.nodes) {
            feature.push_back(n.feature);
            threshold.push_back(n.threshold);
            left.push_back(n.left);
            right.push_back(n.right);
            value.push_back(n.value);
        }
        trees.push_back({{"feature", feature}, {"threshold", threshold}, {"left", left}, {"right", right}, {"value", value}});
    }
    j["trees"] = std::move(trees);
    return j;
}

TrainedModel TrainedModel::from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("format", "") != "attnkit-model") throw Error("not an attnkit model document");
    TrainedModel m;
    m.spec_ = model_spec_from_json(j.at("spec"));
    m.n_features_ = j.at("n_features").get<std::size_t>();
    if (m.spec_.kind == ModelKind::LogisticRegression) {
        m.coef_ = j.at("coefficients").get<std::vector<double>>();
        m.intercept_ = j.at("intercept").get<double>();
        if (m.coef_.size() != m.n_features_) throw Error("model: coefficient count does not match n_features");
        return m;
    }
    for (const auto& jt : j.at("trees")) {
        const auto feature = jt.at("feature").get<std::vector<int>>();
        const auto threshold = jt.at("threshold").get<std::vector<double>>();
        const auto left = jt.at("left").get<std::vector<int>>();
        const auto right = jt.at("right").get<std::vector<int>>();
        const auto value = jt.at("value").get<std::vector<double>>();
        const std::size_t n = feature.size();
        if (n == 0 || threshold.size() != n || left.size() != n || right.size() != n || value.size() != n)
            throw Error("model: malformed tree");
        Tree t;
        for (std::size_t i = 0; i < n; ++i) {
            const bool leaf = feature[i] < 0;
            if (!leaf && (feature[i] >= static_cast<int>(m.n_features_) || left[i] <= static_cast<int>(i) ||
                          right[i] <= static_cast<int>(i) || left[i] >= static_cast<int>(n) ||
                          right[i] >= static_cast<int>(n)))
                throw Error("model: malformed tree node");
            t.nodes.push_back({feature[i], threshold[i], left[i], right[i], value[i]});
        }
        m.trees_.push_back(std::move(t));
    }
    if (m.trees_.size() != m.spec_.trees) throw Error("model: tree count does not match the spec");
    return m;
}

}  // namespace attnkit::ml
