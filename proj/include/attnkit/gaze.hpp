#pragma once

#include <cstdint>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "attnkit/common.hpp"

namespace attnkit::gaze {

struct ScreenGeometry {
    Vec2 screen_px{1920.0, 1080.0};
    std::optional<Vec2> screen_mm;
    std::optional<double> viewing_distance_mm;

    bool has_visual_angle() const { return screen_mm.has_value() && viewing_distance_mm.has_value(); }
    // Small-angle conversion: pixels per degree of visual angle along x.
    std::optional<double> px_per_degree() const;
    double diagonal_px() const { return screen_px.norm(); }
};

struct GazeSample {
    std::int64_t t_us = 0;
    Vec2 left_por;
    Vec2 right_por;
    double left_pupil_mm = 0.0;
    double right_pupil_mm = 0.0;
    Vec2 left_pupil_pos;
    Vec2 right_pupil_pos;
    std::optional<Vec3> left_dir;
    std::optional<Vec3> right_dir;
    bool valid_left = false;
    bool valid_right = false;

    bool valid() const { return valid_left || valid_right; }
    // Binocular mean when both eyes are valid, else the valid eye.
    std::optional<Vec2> point_of_regard() const;
    std::optional<double> pupil_mm() const;
};

struct SampleSeries {
    std::vector<GazeSample> samples;
    ScreenGeometry geometry;

    // Median inter-sample interval; 4000 us (250 Hz) when fewer than two samples.
    std::int64_t nominal_interval_us() const;
};

struct IngestReport {
    std::size_t rows = 0;
    std::size_t malformed_rows = 0;
    std::vector<std::size_t> malformed_lines;
    std::size_t out_of_range_eyes = 0;
};

struct LoadedSamples {
    SampleSeries series;
    IngestReport report;
};

// Parses the gaze CSV schema. The dir_* columns are optional. Rows with unparsable
// fields are skipped and counted; a POR outside [-0.5w, 1.5w] x [-0.5h, 1.5h]
// invalidates that eye.
LoadedSamples load_samples(std::istream& in, const ScreenGeometry& geometry,
                           const std::string& source_name = "<stream>");
LoadedSamples load_samples(const std::string& path, const ScreenGeometry& geometry);

enum class EventKind { Fixation, Saccade, Blink };
const char* to_string(EventKind kind);

struct FixationAttrs {
    Vec2 centroid;
    Vec2 dispersion;  // max - min per axis
    std::optional<double> mean_pupil_mm;
};

struct SaccadeAttrs {
    Vec2 start;
    Vec2 end;
    double length_px = 0.0;
    double direction_px = 0.0;  // signed horizontal displacement
    double peak_velocity_px_ms = 0.0;
    // Degree-valued attributes are missing when visual-angle geometry is unknown.
    std::optional<double> amplitude_deg;
    std::optional<double> peak_velocity_deg_s;
    std::optional<double> avg_velocity_deg_s;
    std::optional<double> peak_accel_deg_s2;
    std::optional<double> avg_accel_deg_s2;
    std::optional<double> peak_decel_deg_s2;
};

struct Event {
    EventKind kind = EventKind::Fixation;
    std::int64_t start_us = 0;
    std::int64_t end_us = 0;  // exclusive
    FixationAttrs fixation;
    SaccadeAttrs saccade;

    double duration_ms() const { return static_cast<double>(end_us - start_us) / 1000.0; }
    // Blinks only.
    bool overlong() const { return kind == EventKind::Blink && duration_ms() > 500.0; }
};

struct DetectionParams {
    double dispersion_px = 100.0;
    double min_fixation_ms = 80.0;
    double velocity_deg_s = 40.0;   // used when visual-angle geometry is known
    double velocity_px_ms = 0.8;    // fallback gate
    double min_blink_ms = 50.0;
};

// Hybrid I-VT / I-DT detector.
//  1. Bilaterally invalid runs lasting >= min_blink_ms are blinks; they split the
//     series into segments. Shorter dropouts are linearly bridged for velocity only.
//  2. Per segment, speed is the central difference smoothed over 3 samples; samples
//     above the gate are saccadic.
//  3. I-DT (per-axis dispersion over valid samples) runs inside each non-saccadic run.
//  4. A gap between consecutive fixations of one segment whose peak speed exceeds
//     the gate is a saccade spanning [previous fixation end, next fixation start).
// Event spans are half-open; a span ends at the timestamp of the next sample.
std::vector<Event> detect_events(const SampleSeries& series, const DetectionParams& params = {});

struct Window {
    std::string person_id;
    std::string probe_id;
    std::int64_t start_us = 0;
    std::int64_t end_us = 0;
    std::vector<Event> events;
    std::vector<GazeSample> samples;
    double tracking_ratio = 0.0;
    bool accepted = true;
    std::optional<std::string> rejection_reason;

    double duration_s() const { return static_cast<double>(end_us - start_us) / 1e6; }
};

// Window [probe - duration, probe). Events overlapping the window are clipped to it.
// A probe earlier than one duration after the first sample yields accepted = false
// with reason "insufficient span".
Window cut_window(const SampleSeries& series, const std::vector<Event>& events,
                  std::int64_t probe_time_us, double duration_s, double nominal_rate_hz = 250.0);

double tracking_ratio(const Window& window, double nominal_rate_hz);

struct QualityRules {
    double min_tracking_ratio = 0.7;
    bool reject_overlong_blinks = true;
};

// Sets accepted/rejection_reason; a window already rejected keeps its reason.
Window quality_filter(Window window, const QualityRules& rules);

}  // namespace attnkit::gaze
