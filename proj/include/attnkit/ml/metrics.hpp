#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attnkit/common.hpp"
#include "json.hpp"

namespace attnkit::ml {

struct ClassMetrics {
    MaybeReal precision;
    MaybeReal recall;
    MaybeReal f1;
    std::size_t support = 0;
    double prevalence = 0.0;  // chance level for both F1 and AUC-PR
};

struct MetricsReport {
    double threshold = 0.5;
    std::size_t n = 0;
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    ClassMetrics negative;  // class 0
    ClassMetrics positive;  // class 1
    MaybeReal macro_f1;
    MaybeReal auc_pr;   // average precision of class 1
    MaybeReal roc_auc;
    MaybeReal auc_pr_above_chance;
    MaybeReal f1_above_chance;
    std::map<std::string, MetricsReport> by_group;
};

double f1_score(double precision, double recall);

// (actual - chance) / (perfect - chance); throws when perfect <= chance.
double above_chance(double actual, double chance, double perfect = 1.0);

// Step-wise average precision: sum over distinct score thresholds (descending) of
// (R_k - R_{k-1}) * P_k. Missing without both classes.
MaybeReal average_precision(const std::vector<double>& scores, const std::vector<int>& labels);
// Mann-Whitney rank statistic with mid-ranks for ties.
MaybeReal roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

// Predicted positive when score >= threshold. Groups, when given, add sub-reports.
MetricsReport evaluate_scores(const std::vector<double>& scores, const std::vector<int>& labels,
                              double threshold = 0.5, const std::vector<std::string>* groups = nullptr);

struct SweepResult {
    std::vector<MetricsReport> reports;
    double best_threshold = 0.5;
    MaybeReal best_f1;
};

std::vector<double> default_threshold_grid();  // 0.1, 0.2, ..., 0.9

// Winner is the smallest threshold reaching the maximal class-1 F1.
SweepResult threshold_sweep(const std::vector<double>& scores, const std::vector<int>& labels,
                            const std::vector<double>& grid = default_threshold_grid());

nlohmann::json to_json(const MetricsReport& r);

}  // namespace attnkit::ml
