#include "attnkit/gaze.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "attnkit/csv.hpp"

namespace attnkit::gaze {

std::optional<double> ScreenGeometry::px_per_degree() const {
    if (!has_visual_angle() || screen_mm->x <= 0.0 || screen_px.x <= 0.0) return std::nullopt;
    const double mm_per_px = screen_mm->x / screen_px.x;
    const double mm_per_degree = *viewing_distance_mm * std::numbers::pi / 180.0;
    return mm_per_degree / mm_per_px;
}

std::optional<Vec2> GazeSample::point_of_regard() const {
    if (valid_left && valid_right) return (left_por + right_por) * 0.5;
    if (valid_left) return left_por;
    if (valid_right) return right_por;
    return std::nullopt;
}

std::optional<double> GazeSample::pupil_mm() const {
    if (valid_left && valid_right) return 0.5 * (left_pupil_mm + right_pupil_mm);
    if (valid_left) return left_pupil_mm;
    if (valid_right) return right_pupil_mm;
    return std::nullopt;
}

std::int64_t SampleSeries::nominal_interval_us() const {
    if (samples.size() < 2) return 4000;
    std::vector<std::int64_t> d;
    d.reserve(samples.size() - 1);
    for (std::size_t i = 1; i < samples.size(); ++i) d.push_back(samples[i].t_us - samples[i - 1].t_us);
    auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
    std::nth_element(d.begin(), mid, d.end());
    return *mid;
}

// ---------------------------------------------------------------------------
// CSV ingest
// ---------------------------------------------------------------------------

namespace {

std::optional<bool> parse_flag(const std::string& s) {
    if (s == "1" || s == "true" || s == "TRUE" || s == "True") return true;
    if (s == "0" || s == "false" || s == "FALSE" || s == "False") return false;
    return std::nullopt;
}

bool por_in_range(Vec2 p, Vec2 screen) {
    return p.x >= -0.5 * screen.x && p.x <= 1.5 * screen.x && p.y >= -0.5 * screen.y && p.y <= 1.5 * screen.y;
}

}  // namespace

LoadedSamples load_samples(std::istream& in, const ScreenGeometry& geometry, const std::string& source_name) {
    const csv::Table table = csv::Table::read(in, source_name);
    static const char* required[] = {"t_us",          "left_x",          "left_y",          "right_x",
                                     "right_y",       "left_pupil_mm",   "right_pupil_mm",  "left_pupil_px_x",
                                     "left_pupil_px_y", "right_pupil_px_x", "right_pupil_px_y", "valid_left",
                                     "valid_right"};
    std::vector<std::size_t> col;
    for (const char* name : required) col.push_back(table.require_column(name));
    static const char* dir_names[] = {"left_dir_x", "left_dir_y", "left_dir_z",
                                      "right_dir_x", "right_dir_y", "right_dir_z"};
    std::vector<std::optional<std::size_t>> dir_col;
    for (const char* name : dir_names) dir_col.push_back(table.find_column(name));

    LoadedSamples out;
    out.series.geometry = geometry;
    auto& samples = out.series.samples;
    samples.reserve(table.rows());

    for (std::size_t r = 0; r < table.rows(); ++r) {
        const auto& row = table.row(r);
        ++out.report.rows;
        auto malformed = [&] {
            ++out.report.malformed_rows;
            out.report.malformed_lines.push_back(table.line_number(r));
        };
        if (row.size() != table.header().size()) {
            malformed();
            continue;
        }
        const auto t = csv::parse_int(row[col[0]]);
        std::optional<double> v[10];
        bool ok = t.has_value();
        for (int k = 0; k < 10 && ok; ++k) {
            v[k] = csv::parse_real(row[col[k + 1]]);
            ok = v[k].has_value();
        }
        const auto vl = ok ? parse_flag(row[col[11]]) : std::nullopt;
        const auto vr = ok ? parse_flag(row[col[12]]) : std::nullopt;
        if (!ok || !vl || !vr) {
            malformed();
            continue;
        }

        GazeSample s;
        s.t_us = *t;
        s.left_por = {*v[0], *v[1]};
        s.right_por = {*v[2], *v[3]};
        s.left_pupil_mm = *v[4];
        s.right_pupil_mm = *v[5];
        s.left_pupil_pos = {*v[6], *v[7]};
        s.right_pupil_pos = {*v[8], *v[9]};
        s.valid_left = *vl;
        s.valid_right = *vr;

        auto read_dir = [&](int base) -> std::optional<Vec3> {
            double c[3];
            for (int k = 0; k < 3; ++k) {
                if (!dir_col[base + k]) return std::nullopt;
                auto p = csv::parse_real(row[*dir_col[base + k]]);
                if (!p) return std::nullopt;
                c[k] = *p;
            }
            Vec3 d{c[0], c[1], c[2]};
            const double n = d.norm();
            if (n <= 0.0) return std::nullopt;
            return Vec3{d.x / n, d.y / n, d.z / n};
        };
        s.left_dir = read_dir(0);
        s.right_dir = read_dir(3);

        if (s.valid_left && (!por_in_range(s.left_por, geometry.screen_px) || s.left_pupil_mm < 0.0)) {
            s.valid_left = false;
            ++out.report.out_of_range_eyes;
        }
        if (s.valid_right && (!por_in_range(s.right_por, geometry.screen_px) || s.right_pupil_mm < 0.0)) {
            s.valid_right = false;
            ++out.report.out_of_range_eyes;
        }

        if (!samples.empty() && s.t_us <= samples.back().t_us)
            throw IngestError(source_name + ": timestamps not strictly increasing", table.line_number(r));
        samples.push_back(s);
    }
    if (out.report.malformed_rows > 0)
        warn(source_name + ": skipped " + std::to_string(out.report.malformed_rows) + " malformed row(s)");
    return out;
}

LoadedSamples load_samples(const std::string& path, const ScreenGeometry& geometry) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return load_samples(in, geometry, path);
}

const char* to_string(EventKind kind) {
    switch (kind) {
        case EventKind::Fixation: return "fixation";
        case EventKind::Saccade: return "saccade";
        case EventKind::Blink: return "blink";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Event detection
// ---------------------------------------------------------------------------

namespace {

struct Span {
    std::size_t first;
    std::size_t last;  // inclusive
};

class Detector {
public:
    Detector(const SampleSeries& series, const DetectionParams& params)
        : s_(series.samples), params_(params), dt_(series.nominal_interval_us()),
          ppd_(series.geometry.px_per_degree()) {}

    std::vector<Event> run() {
        std::vector<Event> events;
        const std::size_t n = s_.size();
        if (n == 0) return events;
        if (std::none_of(s_.begin(), s_.end(), [](const GazeSample& g) { return g.valid(); })) {
            warn("detect_events: no valid samples; returning no events");
            return events;
        }

        // Blinks and the valid segments between them.
        std::vector<Span> segments;
        std::size_t seg_start = 0;
        std::size_t i = 0;
        while (i < n) {
            if (s_[i].valid()) {
                ++i;
                continue;
            }
            std::size_t j = i;
            while (j + 1 < n && !s_[j + 1].valid()) ++j;
            const std::int64_t start = s_[i].t_us;
            const std::int64_t end = next_t(j);
            if (static_cast<double>(end - start) >= params_.min_blink_ms * 1000.0) {
                Event b;
                b.kind = EventKind::Blink;
                b.start_us = start;
                b.end_us = end;
                events.push_back(b);
                if (i > seg_start) segments.push_back({seg_start, i - 1});
                seg_start = j + 1;
            }
            i = j + 1;
        }
        if (seg_start < n) segments.push_back({seg_start, n - 1});

        pos_.assign(n, Vec2{});
        speed_.assign(n, 0.0);
        accel_.assign(n, 0.0);
        for (const Span& seg : segments) {
            if (!bridge(seg)) continue;
            compute_kinematics(seg);
            detect_in_segment(seg, events);
        }
        std::sort(events.begin(), events.end(),
                  [](const Event& a, const Event& b) { return a.start_us < b.start_us; });
        return events;
    }

private:
    std::int64_t next_t(std::size_t i) const { return i + 1 < s_.size() ? s_[i + 1].t_us : s_[i].t_us + dt_; }
    double t_ms(std::size_t i) const { return static_cast<double>(s_[i].t_us) / 1000.0; }

    // Linear interpolation across dropouts; edges copy the nearest valid position.
    bool bridge(const Span& seg) {
        std::optional<std::size_t> prev;
        for (std::size_t i = seg.first; i <= seg.last; ++i) {
            if (!s_[i].valid()) continue;
            pos_[i] = *s_[i].point_of_regard();
            if (!prev) {
                for (std::size_t k = seg.first; k < i; ++k) pos_[k] = pos_[i];
            } else if (*prev + 1 < i) {
                const double t0 = t_ms(*prev), t1 = t_ms(i);
                for (std::size_t k = *prev + 1; k < i; ++k) {
                    const double w = (t_ms(k) - t0) / (t1 - t0);
                    pos_[k] = pos_[*prev] + (pos_[i] - pos_[*prev]) * w;
                }
            }
            prev = i;
        }
        if (!prev) return false;
        for (std::size_t k = *prev + 1; k <= seg.last; ++k) pos_[k] = pos_[*prev];
        return true;
    }

    void compute_kinematics(const Span& seg) {
        const std::size_t a = seg.first, b = seg.last;
        std::vector<double> raw(b - a + 1, 0.0);
        for (std::size_t i = a; i <= b && b > a; ++i) {
            const std::size_t lo = i == a ? i : i - 1;
            const std::size_t hi = i == b ? i : i + 1;
            raw[i - a] = distance(pos_[hi], pos_[lo]) / (t_ms(hi) - t_ms(lo));
        }
        for (std::size_t i = a; i <= b; ++i) {
            const std::size_t lo = i == a ? i : i - 1;
            const std::size_t hi = i == b ? i : i + 1;
            double sum = 0.0;
            for (std::size_t k = lo; k <= hi; ++k) sum += raw[k - a];
            speed_[i] = sum / static_cast<double>(hi - lo + 1);
        }
        for (std::size_t i = a; i <= b; ++i) {
            if (b == a) {
                accel_[i] = 0.0;
                continue;
            }
            const std::size_t lo = i == a ? i : i - 1;
            const std::size_t hi = i == b ? i : i + 1;
            accel_[i] = (speed_[hi] - speed_[lo]) / (t_ms(hi) - t_ms(lo));
        }
    }

    bool saccadic(std::size_t i) const {
        if (ppd_) return speed_[i] * 1000.0 / *ppd_ > params_.velocity_deg_s;
        return speed_[i] > params_.velocity_px_ms;
    }

    struct Box {
        double min_x = INFINITY, max_x = -INFINITY, min_y = INFINITY, max_y = -INFINITY;
        void add(Vec2 p) {
            min_x = std::min(min_x, p.x);
            max_x = std::max(max_x, p.x);
            min_y = std::min(min_y, p.y);
            max_y = std::max(max_y, p.y);
        }
        bool within(double limit) const { return max_x - min_x <= limit && max_y - min_y <= limit; }
    };

    void detect_in_segment(const Span& seg, std::vector<Event>& events) {
        std::vector<Span> fixations;
        std::size_t i = seg.first;
        while (i <= seg.last) {
            if (saccadic(i)) {
                ++i;
                continue;
            }
            std::size_t r = i;
            while (r + 1 <= seg.last && !saccadic(r + 1)) ++r;
            idt(Span{i, r}, fixations);
            i = r + 1;
        }

        for (std::size_t k = 0; k < fixations.size(); ++k) {
            events.push_back(make_fixation(fixations[k]));
            if (k + 1 == fixations.size()) continue;
            const std::size_t gap_first = fixations[k].last + 1;
            const std::size_t gap_last = fixations[k + 1].first - 1;
            if (fixations[k + 1].first <= gap_first) continue;
            bool gated = false;
            for (std::size_t g = gap_first; g <= gap_last; ++g) gated = gated || saccadic(g);
            if (gated) events.push_back(make_saccade(fixations[k].last, fixations[k + 1].first));
        }
    }

    void idt(const Span& run, std::vector<Span>& out) const {
        const double min_us = params_.min_fixation_ms * 1000.0;
        std::size_t i = run.first;
        while (i <= run.last) {
            if (!s_[i].valid()) {
                ++i;
                continue;
            }
            std::optional<std::size_t> j;
            Box box;
            for (std::size_t k = i; k <= run.last; ++k) {
                if (!s_[k].valid()) continue;
                box.add(pos_[k]);
                if (static_cast<double>(next_t(k) - s_[i].t_us) >= min_us) {
                    j = k;
                    break;
                }
            }
            if (!j) return;
            if (!box.within(params_.dispersion_px)) {
                ++i;
                continue;
            }
            std::size_t end = *j;
            for (std::size_t k = end + 1; k <= run.last; ++k) {
                if (!s_[k].valid()) continue;
                Box grown = box;
                grown.add(pos_[k]);
                if (!grown.within(params_.dispersion_px)) break;
                box = grown;
                end = k;
            }
            out.push_back({i, end});
            i = end + 1;
        }
    }

    Event make_fixation(const Span& f) const {
        Event e;
        e.kind = EventKind::Fixation;
        e.start_us = s_[f.first].t_us;
        e.end_us = next_t(f.last);
        Box box;
        Vec2 sum;
        std::size_t count = 0;
        double pupil_sum = 0.0;
        std::size_t pupil_count = 0;
        for (std::size_t k = f.first; k <= f.last; ++k) {
            if (!s_[k].valid()) continue;
            box.add(pos_[k]);
            sum = sum + pos_[k];
            ++count;
            if (auto p = s_[k].pupil_mm()) {
                pupil_sum += *p;
                ++pupil_count;
            }
        }
        e.fixation.centroid = sum * (1.0 / static_cast<double>(count));
        e.fixation.dispersion = {box.max_x - box.min_x, box.max_y - box.min_y};
        if (pupil_count > 0) e.fixation.mean_pupil_mm = pupil_sum / static_cast<double>(pupil_count);
        return e;
    }

    Event make_saccade(std::size_t last_of_prev, std::size_t first_of_next) const {
        Event e;
        e.kind = EventKind::Saccade;
        e.start_us = s_[last_of_prev + 1].t_us;
        e.end_us = s_[first_of_next].t_us;
        SaccadeAttrs& a = e.saccade;
        a.start = pos_[last_of_prev];
        a.end = pos_[first_of_next];
        a.length_px = distance(a.end, a.start);
        a.direction_px = a.end.x - a.start.x;

        double peak = 0.0, speed_sum = 0.0, accel_peak = 0.0, decel_peak = 0.0, accel_pos_sum = 0.0;
        std::size_t n = 0, n_pos = 0;
        for (std::size_t g = last_of_prev + 1; g < first_of_next; ++g) {
            peak = std::max(peak, speed_[g]);
            speed_sum += speed_[g];
            ++n;
            accel_peak = std::max(accel_peak, accel_[g]);
            decel_peak = std::max(decel_peak, -accel_[g]);
            if (accel_[g] > 0.0) {
                accel_pos_sum += accel_[g];
                ++n_pos;
            }
        }
        a.peak_velocity_px_ms = peak;
        if (ppd_) {
            const double v = 1000.0 / *ppd_;      // px/ms -> deg/s
            const double acc = 1.0e6 / *ppd_;     // px/ms^2 -> deg/s^2
            a.amplitude_deg = a.length_px / *ppd_;
            a.peak_velocity_deg_s = peak * v;
            a.avg_velocity_deg_s = speed_sum / static_cast<double>(n) * v;
            a.peak_accel_deg_s2 = accel_peak * acc;
            a.avg_accel_deg_s2 = n_pos > 0 ? accel_pos_sum / static_cast<double>(n_pos) * acc : 0.0;
            a.peak_decel_deg_s2 = decel_peak * acc;
        }
        return e;
    }

    const std::vector<GazeSample>& s_;
    DetectionParams params_;
    std::int64_t dt_;
    std::optional<double> ppd_;
    std::vector<Vec2> pos_;
    std::vector<double> speed_;
    std::vector<double> accel_;
};

}  // namespace

std::vector<Event> detect_events(const SampleSeries& series, const DetectionParams& params) {
    return Detector(series, params).run();
}

// ---------------------------------------------------------------------------
// Windows and quality
// ---------------------------------------------------------------------------

Window cut_window(const SampleSeries& series, const std::vector<Event>& events, std::int64_t probe_time_us,
                  double duration_s, double nominal_rate_hz) {
    if (!(duration_s > 0.0)) throw Error("cut_window: duration must be positive");
    Window w;
    w.end_us = probe_time_us;
    w.start_us = probe_time_us - static_cast<std::int64_t>(std::llround(duration_s * 1e6));

    for (const GazeSample& s : series.samples)
        if (s.t_us >= w.start_us && s.t_us < w.end_us) w.samples.push_back(s);
    for (const Event& e : events) {
        if (e.end_us <= w.start_us || e.start_us >= w.end_us) continue;
        Event c = e;
        c.start_us = std::max(e.start_us, w.start_us);
        c.end_us = std::min(e.end_us, w.end_us);
        w.events.push_back(c);
    }
    w.tracking_ratio = tracking_ratio(w, nominal_rate_hz);
    if (series.samples.empty() || w.start_us < series.samples.front().t_us) {
        w.accepted = false;
        w.rejection_reason = "insufficient span";
    }
    return w;
}

double tracking_ratio(const Window& window, double nominal_rate_hz) {
    if (!(nominal_rate_hz > 0.0)) throw Error("tracking_ratio: nominal rate must be positive");
    const double expected = window.duration_s() * nominal_rate_hz;
    if (expected <= 0.0) return 0.0;
    const auto valid = std::count_if(window.samples.begin(), window.samples.end(),
                                     [](const GazeSample& s) { return s.valid(); });
    return std::clamp(static_cast<double>(valid) / expected, 0.0, 1.0);
}

Window quality_filter(Window window, const QualityRules& rules) {
    if (window.rejection_reason) {
        window.accepted = false;
        return window;
    }
    window.accepted = true;
    if (window.tracking_ratio < rules.min_tracking_ratio) {
        window.accepted = false;
        window.rejection_reason = "tracking ratio";
    } else if (rules.reject_overlong_blinks &&
               std::any_of(window.events.begin(), window.events.end(), [](const Event& e) { return e.overlong(); })) {
        window.accepted = false;
        window.rejection_reason = "overlong blink";
    }
    return window;
}

}  // namespace attnkit::gaze
