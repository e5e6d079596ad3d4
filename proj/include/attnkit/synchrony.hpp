#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "attnkit/common.hpp"
#include "attnkit/gaze.hpp"

namespace attnkit::synchrony {

struct Fixation {
    Vec2 pos;
    double duration_ms = 0.0;
};

struct Scanpath {
    std::vector<Fixation> fixations;
    Vec2 screen_px{1920.0, 1080.0};

    // Fixation events of a window, in time order. Degenerate entries are skipped.
    static Scanpath from_events(const std::vector<gaze::Event>& events, Vec2 screen_px);
};

struct GridSpec {
    std::size_t cols = 64;
    std::size_t rows = 36;
    Vec2 screen_px{1920.0, 1080.0};
};

enum class Weighting { Count, Duration };

// Row-major grid of probabilities; sums to 1 and is strictly positive.
struct DensityMap {
    std::size_t cols = 0;
    std::size_t rows = 0;
    Vec2 cell_size_px;
    double sigma_px = 0.0;
    std::vector<double> values;

    double at(std::size_t row, std::size_t col) const { return values[row * cols + col]; }
};

inline constexpr double kDensityEpsilon = 1e-12;

// 2 % of the screen width, or 1 degree of visual angle when the geometry allows.
double default_sigma_px(const gaze::ScreenGeometry& geometry);

// Isotropic Gaussian per fixation evaluated at cell centres, weight 1 or the
// fixation duration; normalized, regularized by kDensityEpsilon and renormalized.
// The OpenMP kernel and the serial reference produce identical values.
DensityMap density_map(const Scanpath& scanpath, const GridSpec& grid, double sigma_px, Weighting weighting);
DensityMap density_map_serial(const Scanpath& scanpath, const GridSpec& grid, double sigma_px,
                              Weighting weighting);

// D(P||Q) in nats, or the mean of both directions when symmetrize is set.
double kl_divergence(const DensityMap& p, const DensityMap& q, bool symmetrize = true);

struct MultiMatchResult {
    double shape = 0.0;
    double direction = 0.0;
    double length = 0.0;
    double position = 0.0;
    double duration = 0.0;
    double overall = 0.0;
};

// One aligned saccade pair on the minimum-cost path (indices into each scanpath's
// saccade vectors; saccade i starts at fixation i).
struct AlignedPair {
    std::size_t a;
    std::size_t b;
};

// Minimum summed vector-difference path over moves (1,0), (0,1), (1,1) from the
// first to the last saccade pair. Ties prefer the diagonal move, then the
// predecessor closer to the normalized diagonal.
std::vector<AlignedPair> align_saccades(const Scanpath& a, const Scanpath& b);

// Scores a given alignment. Normalization bounds: shape and length by twice the
// screen diagonal, direction by pi, position by the diagonal, duration by the
// larger of the two fixation durations.
MultiMatchResult score_alignment(const Scanpath& a, const Scanpath& b, const std::vector<AlignedPair>& path);

// Unsimplified MultiMatch. Throws "scanpath too short" below two fixations.
MultiMatchResult multimatch(const Scanpath& a, const Scanpath& b);

// Gaze resampled to a fixed frame clock; NaN marks a frame with no valid sample.
struct GazeTrace {
    std::int64_t t0_us = 0;
    std::int64_t period_us = 40000;
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> pupil;

    std::size_t frames() const { return x.size(); }
};

// Averages the valid samples falling into each frame [t0 + k*period, t0 + (k+1)*period).
GazeTrace resample_trace(const gaze::SampleSeries& series, std::int64_t t0_us, std::int64_t period_us,
                         std::size_t frames);

// Mean of the per-channel Pearson correlations (x, y, pupil) over the overlapping
// frames. Constant or too-short channels are skipped; missing if all are skipped.
MaybeReal isc_pair(const GazeTrace& a, const GazeTrace& b);

enum class Measure { KLD, MMOverall, MMShape, MMDirection, MMLength, MMPosition, MMDuration, ISC };
const char* to_string(Measure m);
std::optional<Measure> measure_from_string(const std::string& s);
// "multimatch" expands to the six MultiMatch measures.
std::vector<Measure> measures_from_flag(const std::string& flag);

struct Subject {
    std::string person_id;
    std::string label;
    Scanpath scanpath;
    std::optional<GazeTrace> trace;
};

struct GroupOptions {
    GridSpec grid;
    double sigma_px = 38.4;
    Weighting weighting = Weighting::Count;
    bool symmetrize_kld = true;
};

struct SynchronyScore {
    std::string person_id;
    std::string probe_id;
    Measure measure = Measure::KLD;
    MaybeReal raw;
    MaybeReal z;
    std::string label;
    std::size_t n_peers = 0;
    std::optional<std::string> reason;
};

// Per person: mean pairwise measure against every same-label peer of the probe;
// z-standardized across all scored persons of the probe (zero variance maps to 0).
// Output is ordered by measure, then by input order.
std::vector<SynchronyScore> group_scores(const std::string& probe_id, const std::vector<Subject>& subjects,
                                         const std::vector<Measure>& measures, const GroupOptions& options);
std::vector<SynchronyScore> group_scores_serial(const std::string& probe_id, const std::vector<Subject>& subjects,
                                                const std::vector<Measure>& measures, const GroupOptions& options);

// Plain-text matrix (one grid row per line) and 16-bit binary PGM with the largest
// cell mapped to 65535.
void write_density_csv(std::ostream& out, const DensityMap& map);
void write_density_pgm(std::ostream& out, const DensityMap& map);

}  // namespace attnkit::synchrony
