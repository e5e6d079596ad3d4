#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "attnkit/gaze.hpp"
#include "attnkit/handraise.hpp"
#include "attnkit/ml/dataset.hpp"
#include "attnkit/physio.hpp"

namespace attnkit::testing {

// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir();
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

void write_text(const std::filesystem::path& p, const std::string& text);
std::string read_text(const std::filesystem::path& p);

gaze::GazeSample valid_sample(std::int64_t t_us, Vec2 p, double pupil_mm = 3.0);
gaze::GazeSample invalid_sample(std::int64_t t_us);

// Stepwise trace: stationary clusters joined by instantaneous jumps, plus invalid runs.
// A cluster may hold short interior dropouts that stay below the blink threshold.
struct TraceBlock {
    bool valid = true;
    Vec2 point;
    std::size_t samples = 0;
    std::vector<std::pair<std::size_t, std::size_t>> dropouts;  // (offset, length) inside a cluster
};

struct ExpectedEvent {
    gaze::EventKind kind;
    std::int64_t start_us;
    std::int64_t end_us;
    double length_px = 0.0;  // saccades only
    bool operator==(const ExpectedEvent&) const = default;
};

gaze::SampleSeries build_trace(const std::vector<TraceBlock>& blocks, std::int64_t dt_us = 4000);

// Random layout: clusters of at least 24 samples, jumps of at least 150 px,
// optional interior dropouts and blink runs (some longer than 500 ms).
std::vector<TraceBlock> random_trace_blocks(std::uint64_t seed, std::size_t clusters = 6);

// Events the detector must report for a stepwise trace at 250 Hz under default
// parameters without visual-angle geometry, sorted by start.
std::vector<ExpectedEvent> stepwise_oracle(const std::vector<TraceBlock>& blocks, std::int64_t dt_us = 4000);

std::vector<ExpectedEvent> as_expected(const std::vector<gaze::Event>& events);

// Synthetic classroom pose: students seated on a row, each raising the right arm
// during the given frame intervals.
struct StudentScript {
    Vec2 neck;
    double scale = 60.0;
    std::vector<std::pair<std::int64_t, std::int64_t>> raised;  // [first, last) frames
};

handraise::PosePerson synth_pose(const StudentScript& s, bool arm_up, std::uint64_t noise_seed);
std::vector<handraise::PoseFrame> synth_video(const std::vector<StudentScript>& students, std::int64_t frames,
                                              std::uint64_t seed, double fps = 24.0);
std::string pose_jsonl(const std::vector<handraise::PoseFrame>& frames);

// Two-class feature windows: `informative` of `n_features` columns shift by d
// within-class standard deviations for positives; persons add a random offset.
struct TwoClassSpec {
    std::size_t persons = 60;
    std::size_t windows = 15;
    double prevalence = 0.25;
    double d = 1.5;
    std::size_t n_features = 12;
    std::size_t informative = 4;
    double person_sd = 0.5;
};

ml::Dataset two_class_dataset(const TwoClassSpec& spec, std::uint64_t seed);

// Gaze CSV in the loader's column layout.
std::string gaze_csv(const gaze::SampleSeries& series);

// features CSV and labels CSV (person_id,probe_id,label[,group]) for a dataset.
std::string dataset_features_csv(const ml::Dataset& d);
std::string dataset_labels_csv(const ml::Dataset& d);

// Flat baseline, linear rise over rise_s to base + amplitude, a two-sample apex
// (so the 3-sample median keeps the peak), then exponential decay with time constant tau_s.
struct ScrBump {
    double rate_hz = 32.0;
    double onset_s = 8.0;
    double rise_s = 2.0;
    double tau_s = 0.5;
    double total_s = 30.0;
    double base = 2.0;
    double amplitude = 1.0;

    std::size_t onset_index() const;
    std::size_t peak_index() const;
};

physio::PhysioSeries scr_bump_series(const ScrBump& b);

// Videos of seated students who raise an arm now and then. Labels are keyed by the
// student ids the tracker assigns, matched to scripts by neck position.
struct Classroom {
    std::vector<handraise::Video> videos;
    std::vector<std::vector<handraise::PoseFrame>> frames;
    std::vector<handraise::LabelInterval> labels;
    std::vector<std::map<std::string, long long>> raise_counts;  // per video, by student id
};

Classroom synthetic_classroom(std::uint64_t seed, std::size_t videos, std::size_t students = 4,
                              std::int64_t frames = 480, double fps = 24.0);

physio::PhysioSeries sine_series(double freq_hz, double seconds, double rate_hz = 64.0, double phase = 0.3);

}  // namespace attnkit::testing
