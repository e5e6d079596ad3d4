#include "attnkit/features.hpp"

#include <algorithm>
#include <cmath>

#include "attnkit/stats.hpp"

namespace attnkit::features {

std::vector<std::pair<const char*, MaybeReal>> AggStats::entries() const {
    return {{"min", min},   {"max", max}, {"mean", mean},         {"median", median},
            {"std", std},   {"q25", q25}, {"q75", q75},           {"skew", skew},
            {"kurtosis", kurtosis},       {"range", range}};
}

AggStats aggregate(std::span<const double> values, std::uint32_t sel) {
    AggStats a;
    a.count = values.size();
    if (values.empty()) return a;

    std::vector<double> sorted(values.begin(), values.end());
    std::sort(sorted.begin(), sorted.end());
    const double n = static_cast<double>(sorted.size());
    const bool constant = sorted.front() == sorted.back();
    const double m = stats::mean(values);

    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : values) {
        const double d = v - m;
        const double d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;

    auto pick = [sel](Stat s, MaybeReal v) -> MaybeReal { return (sel & s) ? v : std::nullopt; };
    a.min = pick(kMin, sorted.front());
    a.max = pick(kMax, sorted.back());
    a.mean = pick(kMean, m);
    a.median = pick(kMedian, stats::ecdf_quantile_sorted(sorted, 0.5));
    a.q25 = pick(kQ25, stats::ecdf_quantile_sorted(sorted, 0.25));
    a.q75 = pick(kQ75, stats::ecdf_quantile_sorted(sorted, 0.75));
    a.range = pick(kRange, sorted.back() - sorted.front());

    if (constant) {
        a.std = pick(kStd, 0.0);
        a.skew = pick(kSkew, 0.0);
        a.kurtosis = pick(kKurtosis, 0.0);
        return a;
    }
    a.std = pick(kStd, std::sqrt(m2 * n / (n - 1.0)));
    if (sorted.size() >= 3) {
        const double g1 = m3 / std::pow(m2, 1.5);
        a.skew = pick(kSkew, g1 * std::sqrt(n * (n - 1.0)) / (n - 2.0));
    }
    if (sorted.size() >= 4) {
        const double g2 = m4 / (m2 * m2) - 3.0;
        a.kurtosis = pick(kKurtosis, ((n + 1.0) * g2 + 6.0) * (n - 1.0) / ((n - 2.0) * (n - 3.0)));
    }
    return a;
}

const char* to_string(Group g) {
    switch (g) {
        case Group::Fixation: return "fixation";
        case Group::Saccade: return "saccade";
        case Group::Blink: return "blink";
        case Group::Pupil: return "pupil";
        case Group::Vergence: return "vergence";
        case Group::Physio: return "physio";
        case Group::External: return "external";
    }
    return "external";
}

std::optional<Group> group_from_string(const std::string& s) {
    for (Group g : {Group::Fixation, Group::Saccade, Group::Blink, Group::Pupil, Group::Vergence, Group::Physio,
                    Group::External})
        if (s == to_string(g)) return g;
    return std::nullopt;
}

void FeatureVector::add(std::string name, MaybeReal value, Group group) {
    if (has(name)) throw Error("duplicate feature name '" + name + "'");
    if (value && !std::isfinite(*value)) throw Error("non-finite value for feature '" + name + "'");
    entries_.push_back({std::move(name), value, group});
}

void FeatureVector::add_stats(const std::string& prefix, const AggStats& stats, Group group) {
    for (const auto& [suffix, value] : stats.entries()) add(prefix + "." + suffix, value, group);
}

bool FeatureVector::has(const std::string& name) const {
    return std::any_of(entries_.begin(), entries_.end(), [&](const Feature& f) { return f.name == name; });
}

MaybeReal FeatureVector::get(const std::string& name) const {
    for (const Feature& f : entries_)
        if (f.name == name) return f.value;
    throw Error("unknown feature '" + name + "'");
}

void FeatureVector::concat(const FeatureVector& other) {
    for (const Feature& f : other.entries_) add(f.name, f.value, f.group);
}

Vergence vergence(const gaze::GazeSample& s) {
    Vergence v;
    if (!s.valid_left || !s.valid_right) return v;
    v.pupil_distance_px = distance(s.left_pupil_pos, s.right_pupil_pos);
    if (s.left_dir && s.right_dir) {
        const double nl = s.left_dir->norm(), nr = s.right_dir->norm();
        if (nl > 0.0 && nr > 0.0)
            v.angle_rad = std::acos(std::clamp(s.left_dir->dot(*s.right_dir) / (nl * nr), -1.0, 1.0));
    }
    return v;
}

MaybeReal pupil_baseline(const gaze::SampleSeries& series, double baseline_ms) {
    if (series.samples.empty()) {
        warn("pupil baseline: empty recording");
        return std::nullopt;
    }
    const std::int64_t t0 = series.samples.front().t_us;
    const double limit = baseline_ms * 1000.0;
    double sum = 0.0;
    std::size_t n = 0;
    for (const auto& s : series.samples) {
        if (static_cast<double>(s.t_us - t0) >= limit) break;
        if (auto p = s.pupil_mm()) {
            sum += *p;
            ++n;
        }
    }
    if (n == 0) {
        warn("pupil baseline: no valid pupil sample in the baseline span");
        return std::nullopt;
    }
    return sum / static_cast<double>(n);
}

std::vector<MaybeReal> pupil_baseline_correct(std::span<const MaybeReal> values, MaybeReal baseline) {
    std::vector<MaybeReal> out(values.size());
    if (!baseline) return out;
    for (std::size_t i = 0; i < values.size(); ++i)
        if (values[i]) out[i] = *values[i] - *baseline;
    return out;
}

namespace {

// RMS distance of centroids to their mean, per axis.
std::pair<double, double> rms_dispersion(const std::vector<Vec2>& c) {
    Vec2 m;
    for (const Vec2& p : c) m = m + p;
    m = m * (1.0 / static_cast<double>(c.size()));
    double sx = 0.0, sy = 0.0;
    for (const Vec2& p : c) {
        sx += (p.x - m.x) * (p.x - m.x);
        sy += (p.y - m.y) * (p.y - m.y);
    }
    const double n = static_cast<double>(c.size());
    return {std::sqrt(sx / n), std::sqrt(sy / n)};
}

void push(std::vector<double>& v, const MaybeReal& x) {
    if (x) v.push_back(*x);
}

}  // namespace

FeatureVector extract_feature_vector(const gaze::Window& window, const gaze::ScreenGeometry& geometry,
                                     const ExtractOptions& options) {
    if (!window.accepted) throw Error("extract_feature_vector: window " + window.probe_id + " is not accepted");
    using gaze::EventKind;
    FeatureVector fv(window.person_id, window.probe_id);
    const bool degrees = geometry.has_visual_angle();

    std::vector<const gaze::Event*> events;
    for (const auto& e : window.events) events.push_back(&e);
    std::stable_sort(events.begin(), events.end(),
                     [](const gaze::Event* a, const gaze::Event* b) { return a->start_us < b->start_us; });

    std::vector<double> fix_dur, ratio, sac_dur, sac_amp, sac_len, v_avg, v_peak, a_avg, a_peak, d_peak, blink_dur;
    std::vector<Vec2> centroids;
    std::vector<MaybeReal> fix_pupil;
    std::size_t regressions = 0, saccades = 0, fixations = 0, blinks = 0;

    for (std::size_t i = 0; i < events.size(); ++i) {
        const gaze::Event& e = *events[i];
        switch (e.kind) {
            case EventKind::Fixation: {
                ++fixations;
                fix_dur.push_back(e.duration_ms());
                centroids.push_back(e.fixation.centroid);
                fix_pupil.push_back(e.fixation.mean_pupil_mm);
                if (i + 1 < events.size() && events[i + 1]->kind == EventKind::Saccade &&
                    events[i + 1]->duration_ms() > 0.0)
                    ratio.push_back(e.duration_ms() / events[i + 1]->duration_ms());
                break;
            }
            case EventKind::Saccade: {
                ++saccades;
                const auto& s = e.saccade;
                sac_dur.push_back(e.duration_ms());
                sac_len.push_back(s.length_px);
                if (s.direction_px < 0.0) ++regressions;
                if (degrees) {
                    push(sac_amp, s.amplitude_deg);
                    push(v_avg, s.avg_velocity_deg_s);
                    push(v_peak, s.peak_velocity_deg_s);
                    push(a_avg, s.avg_accel_deg_s2);
                    push(a_peak, s.peak_accel_deg_s2);
                    push(d_peak, s.peak_decel_deg_s2);
                }
                break;
            }
            case EventKind::Blink:
                ++blinks;
                blink_dur.push_back(e.duration_ms());
                break;
        }
    }

    fv.add("fixation_count", static_cast<double>(fixations), Group::Fixation);
    fv.add_stats("fixation_duration", aggregate(fix_dur), Group::Fixation);
    if (centroids.empty()) {
        fv.add("fixation_dispersion_x", std::nullopt, Group::Fixation);
        fv.add("fixation_dispersion_y", std::nullopt, Group::Fixation);
    } else {
        const auto [dx, dy] = rms_dispersion(centroids);
        fv.add("fixation_dispersion_x", dx, Group::Fixation);
        fv.add("fixation_dispersion_y", dy, Group::Fixation);
    }
    fv.add_stats("fixation_saccade_ratio", aggregate(ratio), Group::Fixation);

    fv.add("saccade_count", static_cast<double>(saccades), Group::Saccade);
    fv.add_stats("saccade_duration", aggregate(sac_dur), Group::Saccade);
    fv.add_stats("saccade_amplitude", aggregate(sac_amp), Group::Saccade);
    fv.add_stats("saccade_length", aggregate(sac_len), Group::Saccade);
    fv.add_stats("saccade_velocity_avg", aggregate(v_avg), Group::Saccade);
    fv.add_stats("saccade_velocity_peak", aggregate(v_peak), Group::Saccade);
    fv.add_stats("saccade_accel_avg", aggregate(a_avg), Group::Saccade);
    fv.add_stats("saccade_accel_peak", aggregate(a_peak), Group::Saccade);
    fv.add_stats("saccade_decel_peak", aggregate(d_peak), Group::Saccade);
    fv.add("saccade_regression_proportion",
           saccades > 0 ? MaybeReal(static_cast<double>(regressions) / static_cast<double>(saccades)) : std::nullopt,
           Group::Saccade);

    fv.add("blink_count", static_cast<double>(blinks), Group::Blink);
    fv.add_stats("blink_duration", aggregate(blink_dur), Group::Blink);

    std::vector<double> angles, pupil_dist;
    for (const auto& s : window.samples) {
        const Vergence v = vergence(s);
        push(angles, v.angle_rad);
        push(pupil_dist, v.pupil_distance_px);
    }
    fv.add_stats("vergence_angle", aggregate(angles), Group::Vergence);
    fv.add_stats("pupil_distance", aggregate(pupil_dist), Group::Vergence);

    std::vector<double> pupil;
    for (const MaybeReal& p : pupil_baseline_correct(fix_pupil, options.pupil_baseline_mm)) push(pupil, p);
    fv.add_stats("pupil_diameter", aggregate(pupil), Group::Pupil);
    return fv;
}

}  // namespace attnkit::features
