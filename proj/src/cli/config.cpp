#include <set>

#include "attnkit/cli.hpp"

namespace attnkit::cli {

namespace {

using nlohmann::json;

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw UsageError("config: '" + where + "' must be an object");
    for (const auto& [key, value] : j.items())
        if (!known.count(key)) throw UsageError("config: unknown key '" + (where.empty() ? key : where + "." + key) + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw UsageError(std::string("config: bad value for '") + key + "'");
    }
}

template <typename T>
void read_optional(const json& j, const char* key, std::optional<T>& out) {
    if (!j.contains(key)) return;
    if (j.at(key).is_null()) {
        out.reset();
        return;
    }
    T v{};
    read(j, key, v);
    out = v;
}

Vec2 pair_of(const json& j, const char* what) {
    if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number())
        throw UsageError(std::string("config: '") + what + "' must be a [w, h] pair");
    return {j[0].get<double>(), j[1].get<double>()};
}

json maybe(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

void positive(double v, const char* what) {
    if (!(v > 0.0)) throw UsageError(std::string("config: '") + what + "' must be positive");
}

}  // namespace

gaze::ScreenGeometry geometry_from_json(const json& j) {
    reject_unknown(j, {"screen_px", "screen_mm", "viewing_distance_mm"}, "geometry");
    gaze::ScreenGeometry g;
    if (j.contains("screen_px")) g.screen_px = pair_of(j["screen_px"], "screen_px");
    if (j.contains("screen_mm") && !j["screen_mm"].is_null()) g.screen_mm = pair_of(j["screen_mm"], "screen_mm");
    read_optional(j, "viewing_distance_mm", g.viewing_distance_mm);
    positive(g.screen_px.x, "screen_px");
    positive(g.screen_px.y, "screen_px");
    if (g.screen_mm) {
        positive(g.screen_mm->x, "screen_mm");
        positive(g.screen_mm->y, "screen_mm");
    }
    if (g.viewing_distance_mm) positive(*g.viewing_distance_mm, "viewing_distance_mm");
    return g;
}

json to_json(const gaze::ScreenGeometry& g) {
    return {{"screen_px", {g.screen_px.x, g.screen_px.y}},
            {"screen_mm", g.screen_mm ? json{g.screen_mm->x, g.screen_mm->y} : json(nullptr)},
            {"viewing_distance_mm", maybe(g.viewing_distance_mm)}};
}

RunConfig config_from_json(const json& j) {
    reject_unknown(j,
                   {"seed", "geometry", "detection", "window_s", "sampling_rate_hz", "quality", "synchrony",
                    "sequences", "design", "balance", "smote_k", "model", "top_k", "importance_repeats", "threshold",
                    "folds", "out_dir"},
                   "");
    RunConfig c;
    read(j, "seed", c.seed);
    if (j.contains("geometry")) c.geometry = geometry_from_json(j["geometry"]);
    if (j.contains("detection")) {
        const json& d = j["detection"];
        reject_unknown(d, {"dispersion_px", "min_fixation_ms", "velocity_deg_s", "velocity_px_ms", "min_blink_ms"},
                       "detection");
        read(d, "dispersion_px", c.detection.dispersion_px);
        read(d, "min_fixation_ms", c.detection.min_fixation_ms);
        read(d, "velocity_deg_s", c.detection.velocity_deg_s);
        read(d, "velocity_px_ms", c.detection.velocity_px_ms);
        read(d, "min_blink_ms", c.detection.min_blink_ms);
        positive(c.detection.dispersion_px, "dispersion_px");
        positive(c.detection.velocity_deg_s, "velocity_deg_s");
        positive(c.detection.velocity_px_ms, "velocity_px_ms");
    }
    read(j, "window_s", c.window_s);
    positive(c.window_s, "window_s");
    read(j, "sampling_rate_hz", c.sampling_rate_hz);
    positive(c.sampling_rate_hz, "sampling_rate_hz");
    if (j.contains("quality")) {
        const json& q = j["quality"];
        reject_unknown(q, {"min_tracking_ratio", "reject_overlong_blinks"}, "quality");
        read(q, "min_tracking_ratio", c.quality.min_tracking_ratio);
        read(q, "reject_overlong_blinks", c.quality.reject_overlong_blinks);
        if (c.quality.min_tracking_ratio < 0.0 || c.quality.min_tracking_ratio > 1.0)
            throw UsageError("config: min_tracking_ratio must lie in [0, 1]");
    }
    if (j.contains("synchrony")) {
        const json& s = j["synchrony"];
        reject_unknown(s, {"grid_cols", "grid_rows", "sigma_px", "weighting", "symmetrize_kld", "isc_period_ms"},
                       "synchrony");
        read(s, "grid_cols", c.synchrony.grid_cols);
        read(s, "grid_rows", c.synchrony.grid_rows);
        read_optional(s, "sigma_px", c.synchrony.sigma_px);
        if (s.contains("weighting")) {
            std::string w;
            read(s, "weighting", w);
            if (w == "count") c.synchrony.weighting = synchrony::Weighting::Count;
            else if (w == "duration") c.synchrony.weighting = synchrony::Weighting::Duration;
            else throw UsageError("config: weighting must be count or duration");
        }
        read(s, "symmetrize_kld", c.synchrony.symmetrize_kld);
        read(s, "isc_period_ms", c.synchrony.isc_period_ms);
        if (c.synchrony.grid_cols == 0 || c.synchrony.grid_rows == 0) throw UsageError("config: empty density grid");
        if (c.synchrony.sigma_px) positive(*c.synchrony.sigma_px, "sigma_px");
        positive(c.synchrony.isc_period_ms, "isc_period_ms");
    }
    if (j.contains("sequences")) {
        const json& s = j["sequences"];
        reject_unknown(s, {"indel", "substitution", "k", "k_max", "ward_input"}, "sequences");
        read(s, "indel", c.sequences.indel);
        read(s, "substitution", c.sequences.substitution);
        read(s, "k", c.sequences.k);
        read(s, "k_max", c.sequences.k_max);
        if (s.contains("ward_input")) {
            std::string w;
            read(s, "ward_input", w);
            if (w == "squared") c.sequences.ward_input = sequences::WardInput::Squared;
            else if (w == "raw") c.sequences.ward_input = sequences::WardInput::Raw;
            else throw UsageError("config: ward_input must be squared or raw");
        }
        positive(c.sequences.indel, "indel");
        positive(c.sequences.substitution, "substitution");
    }
    if (j.contains("design")) {
        const json& d = j["design"];
        reject_unknown(d, {"impute_mean", "scale", "drop_zero_variance"}, "design");
        read(d, "impute_mean", c.pipeline.design.impute_mean);
        read(d, "scale", c.pipeline.design.scale);
        read(d, "drop_zero_variance", c.pipeline.design.drop_zero_variance);
    }
    if (j.contains("balance")) {
        std::string b;
        read(j, "balance", b);
        try {
            c.pipeline.balance = ml::balance_method_from_string(b);
        } catch (const Error& e) {
            throw UsageError(std::string("config: ") + e.what());
        }
    }
    read(j, "smote_k", c.pipeline.smote_k);
    if (j.contains("model")) {
        try {
            c.pipeline.model = ml::model_spec_from_json(j["model"]);
        } catch (const json::exception& e) {
            throw UsageError(std::string("config: model: ") + e.what());
        } catch (const Error& e) {
            throw UsageError(std::string("config: ") + e.what());
        }
    }
    if (j.contains("top_k")) {
        std::optional<std::size_t> k;
        read_optional(j, "top_k", k);
        c.pipeline.top_k = k;
    }
    read(j, "importance_repeats", c.pipeline.importance_repeats);
    read(j, "threshold", c.pipeline.threshold);
    if (j.contains("folds")) {
        const json& f = j["folds"];
        reject_unknown(f, {"scheme", "k"}, "folds");
        std::string scheme = "lopo";
        std::size_t k = 4;
        read(f, "scheme", scheme);
        read(f, "k", k);
        try {
            c.folds = ml::fold_scheme_from_string(scheme, k);
        } catch (const Error& e) {
            throw UsageError(std::string("config: ") + e.what());
        }
    }
    read(j, "out_dir", c.out_dir);
    return c;
}

json to_json(const RunConfig& c) {
    json model = ml::to_json(c.pipeline.model);
    model.erase("seed");  // derived from the run seed
    return {{"seed", c.seed},
            {"geometry", to_json(c.geometry)},
            {"detection",
             {{"dispersion_px", c.detection.dispersion_px},
              {"min_fixation_ms", c.detection.min_fixation_ms},
              {"velocity_deg_s", c.detection.velocity_deg_s},
              {"velocity_px_ms", c.detection.velocity_px_ms},
              {"min_blink_ms", c.detection.min_blink_ms}}},
            {"window_s", c.window_s},
            {"sampling_rate_hz", c.sampling_rate_hz},
            {"quality",
             {{"min_tracking_ratio", c.quality.min_tracking_ratio},
              {"reject_overlong_blinks", c.quality.reject_overlong_blinks}}},
            {"synchrony",
             {{"grid_cols", c.synchrony.grid_cols},
              {"grid_rows", c.synchrony.grid_rows},
              {"sigma_px", maybe(c.synchrony.sigma_px)},
              {"weighting", c.synchrony.weighting == synchrony::Weighting::Count ? "count" : "duration"},
              {"symmetrize_kld", c.synchrony.symmetrize_kld},
              {"isc_period_ms", c.synchrony.isc_period_ms}}},
            {"sequences",
             {{"indel", c.sequences.indel},
              {"substitution", c.sequences.substitution},
              {"k", c.sequences.k},
              {"k_max", c.sequences.k_max},
              {"ward_input", c.sequences.ward_input == sequences::WardInput::Squared ? "squared" : "raw"}}},
            {"design",
             {{"impute_mean", c.pipeline.design.impute_mean},
              {"scale", c.pipeline.design.scale},
              {"drop_zero_variance", c.pipeline.design.drop_zero_variance}}},
            {"balance", ml::to_string(c.pipeline.balance)},
            {"smote_k", c.pipeline.smote_k},
            {"model", model},
            {"top_k", c.pipeline.top_k ? json(*c.pipeline.top_k) : json(nullptr)},
            {"importance_repeats", c.pipeline.importance_repeats},
            {"threshold", c.pipeline.threshold},
            {"folds",
             {{"scheme", c.folds.kind == ml::FoldScheme::Kind::LeaveOnePersonOut ? "lopo" : "person_kfold"},
              {"k", c.folds.k}}},
            {"out_dir", c.out_dir}};
}

}  // namespace attnkit::cli
