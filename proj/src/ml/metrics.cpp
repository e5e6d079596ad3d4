#include "attnkit/ml/metrics.hpp"

#include <algorithm>
#include <numeric>
#include <set>

namespace attnkit::ml {

double f1_score(double precision, double recall) {
    const double s = precision + recall;
    return s > 0.0 ? 2.0 * precision * recall / s : 0.0;
}

double above_chance(double actual, double chance, double perfect) {
    if (!(perfect > chance)) throw Error("above_chance: perfect score must exceed the chance level");
    return (actual - chance) / (perfect - chance);
}

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw Error("metrics: scores and labels differ in length");
    for (int l : labels)
        if (l != 0 && l != 1) throw Error("metrics: labels must be 0 or 1");
    for (double s : scores)
        if (!std::isfinite(s)) throw Error("metrics: non-finite score");
}

std::pair<std::size_t, std::size_t> class_counts(const std::vector<int>& labels) {
    const auto n1 = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    return {labels.size() - n1, n1};
}

MaybeReal ratio(std::size_t a, std::size_t b) {
    if (b == 0) return std::nullopt;
    return static_cast<double>(a) / static_cast<double>(b);
}

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t support, std::size_t n) {
    ClassMetrics c;
    c.precision = ratio(tp, tp + fp);
    c.recall = ratio(tp, tp + fn);
    if (c.precision && c.recall) c.f1 = f1_score(*c.precision, *c.recall);
    c.support = support;
    c.prevalence = n > 0 ? static_cast<double>(support) / static_cast<double>(n) : 0.0;
    return c;
}

}  // namespace

MaybeReal average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels);
    const auto [n0, n1] = class_counts(labels);
    if (n0 == 0 || n1 == 0) return std::nullopt;
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0, prev_recall = 0.0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t i = 0; i < order.size();) {
        // Tied scores enter the curve together as a single threshold.
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) {
            tp += static_cast<std::size_t>(labels[order[j]]);
            ++j;
        }
        seen = j;
        const double recall = static_cast<double>(tp) / static_cast<double>(n1);
        const double precision = static_cast<double>(tp) / static_cast<double>(seen);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j;
    }
    return ap;
}

MaybeReal roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels);
    const auto [n0, n1] = class_counts(labels);
    if (n0 == 0 || n1 == 0) return std::nullopt;
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double mid = 0.5 * static_cast<double>(i + 1 + j);  // mean of ranks i+1..j
        for (std::size_t t = i; t < j; ++t)
            if (labels[order[t]] == 1) rank_sum += mid;
        i = j;
    }
    const double a = static_cast<double>(n1), b = static_cast<double>(n0);
    return (rank_sum - a * (a + 1.0) / 2.0) / (a * b);
}

MetricsReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels, double threshold,
                              const std::vector<std::string>* groups) {
    check_inputs(scores, labels);
    MetricsReport r;
    r.threshold = threshold;
    r.n = scores.size();
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (labels[i] == 1) (pred ? r.tp : r.fn)++;
        else (pred ? r.fp : r.tn)++;
    }
    r.positive = class_metrics(r.tp, r.fp, r.fn, r.tp + r.fn, r.n);
    r.negative = class_metrics(r.tn, r.fn, r.fp, r.tn + r.fp, r.n);
    if (r.positive.f1 && r.negative.f1) r.macro_f1 = 0.5 * (*r.positive.f1 + *r.negative.f1);
    r.auc_pr = average_precision(scores, labels);
    r.roc_auc = roc_auc(scores, labels);
    if (r.positive.prevalence < 1.0) {
        if (r.auc_pr) r.auc_pr_above_chance = above_chance(*r.auc_pr, r.positive.prevalence);
        if (r.positive.f1) r.f1_above_chance = above_chance(*r.positive.f1, r.positive.prevalence);
    }
    if (groups) {
        if (groups->size() != scores.size()) throw Error("metrics: group column differs in length");
        for (const std::string& g : std::set<std::string>(groups->begin(), groups->end())) {
            std::vector<double> s;
            std::vector<int> l;
            for (std::size_t i = 0; i < scores.size(); ++i)
                if ((*groups)[i] == g) {
                    s.push_back(scores[i]);
                    l.push_back(labels[i]);
                }
            r.by_group.emplace(g, evaluate_scores(s, l, threshold));
        }
    }
    return r;
}

std::vector<double> default_threshold_grid() {
    std::vector<double> g;
    for (int k = 1; k <= 9; ++k) g.push_back(k / 10.0);
    return g;
}

SweepResult threshold_sweep(const std::vector<double>& scores, const std::vector<int>& labels,
                            const std::vector<double>& grid) {
    if (grid.empty()) throw Error("threshold_sweep: empty grid");
    std::vector<double> sorted = grid;
    std::sort(sorted.begin(), sorted.end());
    SweepResult out;
    out.best_threshold = sorted.front();
    for (double t : sorted) {
        out.reports.push_back(evaluate_scores(scores, labels, t));
        const MaybeReal& f1 = out.reports.back().positive.f1;
        if (f1 && (!out.best_f1 || *f1 > *out.best_f1)) {
            out.best_f1 = f1;
            out.best_threshold = t;
        }
    }
    return out;
}

namespace {

nlohmann::json real(const MaybeReal& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); }

nlohmann::json to_json(const ClassMetrics& c) {
    return {{"precision", real(c.precision)},
            {"recall", real(c.recall)},
            {"f1", real(c.f1)},
            {"support", c.support},
            {"chance", c.prevalence}};
}

}  // namespace

nlohmann::json to_json(const MetricsReport& r) {
    nlohmann::json j{{"threshold", r.threshold},
                     {"n", r.n},
                     {"confusion", {{"tp", r.tp}, {"fp", r.fp}, {"tn", r.tn}, {"fn", r.fn}}},
                     {"class_0", to_json(r.negative)},
                     {"class_1", to_json(r.positive)},
                     {"macro", {{"f1", real(r.macro_f1)}}},
                     {"auc_pr", real(r.auc_pr)},
                     {"roc_auc", real(r.roc_auc)},
                     {"above_chance", {{"auc_pr", real(r.auc_pr_above_chance)}, {"f1", real(r.f1_above_chance)}}}};
    if (!r.by_group.empty()) {
        nlohmann::json g = nlohmann::json::object();
        for (const auto& [name, sub] : r.by_group) g[name] = to_json(sub);
        j["groups"] = std::move(g);
    }
    return j;
}

}  // namespace attnkit::ml
