#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "attnkit/ml/balance.hpp"
#include "attnkit/ml/dataset.hpp"
#include "attnkit/ml/folds.hpp"
#include "attnkit/ml/metrics.hpp"
#include "attnkit/ml/model.hpp"
#include "json.hpp"

namespace attnkit::ml {

struct PipelineSpec {
    DesignOptions design;
    BalanceMethod balance = BalanceMethod::None;
    std::size_t smote_k = 5;
    ModelSpec model;
    std::optional<std::size_t> top_k;  // fold-local refit on the k most important features
    std::size_t importance_repeats = 10;
    double threshold = 0.5;
};

nlohmann::json to_json(const PipelineSpec& s);

// Preprocessing, balancing and model fitted on one set of rows.
struct FittedPipeline {
    Transform transform;
    TrainedModel model;

    std::vector<double> predict(const std::vector<std::vector<MaybeReal>>& rows) const;
    nlohmann::json to_json() const;
    static FittedPipeline from_json(const nlohmann::json& j);
};

FittedPipeline fit_pipeline(const Dataset& data, const std::vector<std::size_t>& rows, const PipelineSpec& spec,
                            std::uint64_t seed);

struct FoldResult {
    std::vector<std::string> test_persons;
    std::vector<std::size_t> test_rows;
    MetricsReport report;
};

struct CvResult {
    std::vector<double> oof_scores;  // out-of-fold score per dataset row
    std::vector<FoldResult> folds;
    MetricsReport pooled;            // metrics over all out-of-fold scores
    MaybeReal mean_fold_auc_pr;      // over folds where it is defined
};

// Balancing happens inside each training fold only. Fold i uses seed + i; folds run
// in parallel and results are merged in fold order.
CvResult cross_validate(const Dataset& data, const std::vector<Fold>& folds, const PipelineSpec& spec,
                        std::uint64_t seed);

nlohmann::json to_json(const CvResult& r);

}  // namespace attnkit::ml
