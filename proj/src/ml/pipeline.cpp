#include "attnkit/ml/pipeline.hpp"

#include <cmath>
#include <exception>
#include <limits>

#include "attnkit/ml/importance.hpp"
#include "attnkit/random.hpp"

namespace attnkit::ml {

nlohmann::json to_json(const PipelineSpec& s) {
    nlohmann::json j{{"design",
                      {{"impute_mean", s.design.impute_mean},
                       {"scale", s.design.scale},
                       {"drop_zero_variance", s.design.drop_zero_variance}}},
                     {"balance", to_string(s.balance)},
                     {"smote_k", s.smote_k},
                     {"model", to_json(s.model)},
                     {"importance_repeats", s.importance_repeats},
                     {"threshold", s.threshold}};
    j["top_k"] = s.top_k ? nlohmann::json(*s.top_k) : nlohmann::json(nullptr);
    return j;
}

namespace {

nlohmann::json transform_json(const Transform& t) {
    nlohmann::json impute = nlohmann::json::array();
    for (double v : t.impute) impute.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
    nlohmann::json dropped = nlohmann::json::array();
    for (const auto& d : t.dropped) dropped.push_back({{"name", d.name}, {"reason", d.reason}});
    return {{"input_names", t.input_names}, {"kept", t.kept},   {"impute", impute},
            {"center", t.center},           {"scale", t.scale}, {"dropped", dropped}};
}

Transform transform_from_json(const nlohmann::json& j) {
    Transform t;
    t.input_names = j.at("input_names").get<std::vector<std::string>>();
    t.kept = j.at("kept").get<std::vector<std::size_t>>();
    for (const auto& v : j.at("impute"))
        t.impute.push_back(v.is_null() ? std::numeric_limits<double>::quiet_NaN() : v.get<double>());
    t.center = j.at("center").get<std::vector<double>>();
    t.scale = j.at("scale").get<std::vector<double>>();
    for (const auto& d : j.at("dropped")) t.dropped.push_back({d.at("name"), d.at("reason")});
    const std::size_t k = t.kept.size();
    if (t.impute.size() != k || t.center.size() != k || t.scale.size() != k)
        throw Error("transform record: column lists differ in length");
    for (std::size_t c : t.kept)
        if (c >= t.input_names.size()) throw Error("transform record: column index out of range");
    return t;
}

TrainedModel fit_model(const Matrix& x, const std::vector<int>& y, const PipelineSpec& spec, std::uint64_t seed) {
    const Balanced b = balance(x, y, spec.balance, spec.smote_k, derive_seed(seed, 1));
    ModelSpec ms = spec.model;
    ms.seed = derive_seed(seed, 2);
    return train(b.x, b.y, ms);
}

}  // namespace

std::vector<double> FittedPipeline::predict(const std::vector<std::vector<MaybeReal>>& rows) const {
    return model.predict(transform.apply(rows));
}

nlohmann::json FittedPipeline::to_json() const {
    nlohmann::json j = model.to_json();
    j["transform"] = transform_json(transform);
    j["feature_names"] = transform.kept_names();
    return j;
}

FittedPipeline FittedPipeline::from_json(const nlohmann::json& j) {
    FittedPipeline p;
    nlohmann::json m = j;
    m.erase("transform");
    m.erase("feature_names");
    p.model = TrainedModel::from_json(m);
    p.transform = transform_from_json(j.at("transform"));
    if (p.transform.kept.size() != p.model.n_features())
        throw Error("model document: transform and model disagree on the feature count");
    return p;
}

FittedPipeline fit_pipeline(const Dataset& data, const std::vector<std::size_t>& rows, const PipelineSpec& spec,
                            std::uint64_t seed) {
    FittedPipeline p;
    p.transform = fit_transform(data, spec.design, std::span<const std::size_t>(rows));
    std::vector<std::vector<MaybeReal>> train_rows;
    std::vector<int> y;
    for (std::size_t r : rows) {
        train_rows.push_back(data.rows[r]);
        y.push_back(data.labels[r]);
    }
    const Matrix x = p.transform.apply(train_rows);
    p.model = fit_model(x, y, spec, seed);
    if (spec.top_k && *spec.top_k < x.cols) {
        const auto imp = permutation_importance(p.model, x, y, spec.importance_repeats, derive_seed(seed, 3));
        std::vector<std::size_t> keep = top_k(imp, *spec.top_k);
        std::sort(keep.begin(), keep.end());
        p.transform = p.transform.restrict_to(keep);
        p.model = fit_model(x.select_cols(keep), y, spec, seed);
    }
    return p;
}

CvResult cross_validate(const Dataset& data, const std::vector<Fold>& folds, const PipelineSpec& spec,
                        std::uint64_t seed) {
    if (folds.empty()) throw Error("cross_validate: no folds");
    CvResult out;
    out.oof_scores.assign(data.size(), std::numeric_limits<double>::quiet_NaN());
    out.folds.resize(folds.size());
    std::vector<std::exception_ptr> errors(folds.size());
    const auto n = static_cast<std::ptrdiff_t>(folds.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto f = static_cast<std::size_t>(i);
        try {
            const FittedPipeline p = fit_pipeline(data, folds[f].train, spec, seed + f);
            std::vector<std::vector<MaybeReal>> test_rows;
            std::vector<int> y;
            for (std::size_t r : folds[f].test) {
                test_rows.push_back(data.rows[r]);
                y.push_back(data.labels[r]);
            }
            const std::vector<double> s = p.predict(test_rows);
            for (std::size_t k = 0; k < s.size(); ++k) out.oof_scores[folds[f].test[k]] = s[k];
            out.folds[f] = {folds[f].test_persons, folds[f].test, evaluate_scores(s, y, spec.threshold)};
        } catch (...) {
            errors[f] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    std::vector<double> scores;
    std::vector<int> labels;
    std::vector<std::string> groups;
    for (std::size_t r = 0; r < data.size(); ++r) {
        if (std::isnan(out.oof_scores[r])) continue;
        scores.push_back(out.oof_scores[r]);
        labels.push_back(data.labels[r]);
        if (data.has_groups()) groups.push_back(data.groups[r]);
    }
    out.pooled = evaluate_scores(scores, labels, spec.threshold, data.has_groups() ? &groups : nullptr);
    double sum = 0.0;
    std::size_t defined = 0;
    for (const auto& f : out.folds)
        if (f.report.auc_pr) {
            sum += *f.report.auc_pr;
            ++defined;
        }
    if (defined > 0) out.mean_fold_auc_pr = sum / static_cast<double>(defined);
    return out;
}

nlohmann::json to_json(const CvResult& r) {
    nlohmann::json folds = nlohmann::json::array();
    for (std::size_t i = 0; i < r.folds.size(); ++i)
        folds.push_back({{"fold", i}, {"test_persons", r.folds[i].test_persons}, {"metrics", to_json(r.folds[i].report)}});
    return {{"pooled", to_json(r.pooled)},
            {"mean_fold_auc_pr", r.mean_fold_auc_pr ? nlohmann::json(*r.mean_fold_auc_pr) : nlohmann::json(nullptr)},
            {"folds", folds}};
}

}  // namespace attnkit::ml
