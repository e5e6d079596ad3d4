#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attnkit/common.hpp"
#include "attnkit/features.hpp"

namespace attnkit::physio {

enum class Channel { EDA, BVP };

inline constexpr double kDefaultEdaRateHz = 4.0;
inline constexpr double kDefaultBvpRateHz = 64.0;

struct PhysioSeries {
    std::string person_id;
    Channel channel = Channel::EDA;
    double rate_hz = kDefaultEdaRateHz;
    std::int64_t t0_us = 0;
    std::vector<double> values;

    std::int64_t time_us(std::size_t i) const {
        return t0_us + static_cast<std::int64_t>(std::llround(static_cast<double>(i) * 1e6 / rate_hz));
    }
};

struct EdaComponents {
    std::vector<double> cleaned;
    std::vector<double> tonic;
    std::vector<double> phasic;
};

// cleaned: 3-sample median filter, then z-standardized within the recording
// (all zeros with a warning when the filtered signal is constant).
// tonic: the 4 s running minimum of cleaned, smoothed by a centred 4 s moving average.
// phasic = cleaned - tonic. Cleaned and tonic are snapped to a 2^-40 grid so the
// decomposition is exactly additive. Requires at least 8 samples.
EdaComponents decompose_eda(const PhysioSeries& eda);

struct ScrPeak {
    std::int64_t onset_us = 0;
    std::int64_t peak_us = 0;
    double amplitude = 0.0;  // z-units above the preceding trough
    double rise_time_s = 0.0;
    std::optional<double> recovery_time_s;  // to 50 % of the amplitude
};

inline constexpr double kDefaultMinScrAmplitude = 0.05;

// Local maxima of the phasic component at least min_amplitude above the trough
// reached by walking back while the signal strictly decreases.
std::vector<ScrPeak> scr_peaks(const std::vector<double>& phasic, double rate_hz, std::int64_t t0_us,
                               double min_amplitude = kDefaultMinScrAmplitude);

struct BvpResult {
    std::vector<double> cleaned;
    std::vector<std::size_t> peak_indices;
    std::vector<std::int64_t> peak_times_us;
    std::vector<MaybeReal> rate_bpm;  // per sample, held from each beat to the next
};

// z-standardized, detrended by a 1 s moving average (centred, sliding inward at the ends); beats are positive
// local maxima at least 0.33 s apart (taller peaks win). Requires 2 s of data.
BvpResult bvp_features(const PhysioSeries& bvp);

struct PhysioRecording {
    std::optional<PhysioSeries> eda;
    std::optional<PhysioSeries> bvp;
};

// Whole-recording decomposition, computed once per person.
struct PhysioAnalysis {
    std::optional<PhysioSeries> eda;
    std::optional<EdaComponents> eda_components;
    std::vector<ScrPeak> scr;
    std::optional<PhysioSeries> bvp;
    std::optional<BvpResult> bvp_result;
};

PhysioAnalysis analyze(const PhysioRecording& rec);

// Aggregates under the eda.* and bvp.* namespaces restricted to [start_us, end_us).
// Every name is always emitted; an absent channel yields missing entries.
features::FeatureVector window_features(const PhysioAnalysis& analysis, const std::string& person_id,
                                        const std::string& probe_id, std::int64_t start_us, std::int64_t end_us);

// physio CSV: person_id,channel,t_us,value. Samples are assumed evenly spaced;
// the rate is estimated from the median timestamp step.
std::map<std::string, PhysioRecording> load_physio(std::istream& in, const std::string& source = "<stream>");

}  // namespace attnkit::physio
