#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "attnkit/common.hpp"
#include "attnkit/gaze.hpp"

namespace attnkit::features {

// Selector bits for aggregate().
enum Stat : std::uint32_t {
    kMin = 1u << 0,
    kMax = 1u << 1,
    kMean = 1u << 2,
    kMedian = 1u << 3,
    kStd = 1u << 4,
    kQ25 = 1u << 5,
    kQ75 = 1u << 6,
    kSkew = 1u << 7,
    kKurtosis = 1u << 8,
    kRange = 1u << 9,
    kAllStats = (1u << 10) - 1,
};

// Descriptive statistics of a sample. Median and quartiles invert the ECDF, std uses
// n - 1, skew is the adjusted Fisher-Pearson coefficient (n >= 3) and kurtosis the
// adjusted excess kurtosis (n >= 4). Constant input (including n = 1) gives
// std = skew = kurtosis = 0. Unselected or undefined entries are missing.
struct AggStats {
    MaybeReal min, max, mean, median, std, q25, q75, skew, kurtosis, range;
    std::size_t count = 0;

    // (suffix, value) pairs in a fixed order: min,max,mean,median,std,q25,q75,skew,kurtosis,range.
    std::vector<std::pair<const char*, MaybeReal>> entries() const;
};

AggStats aggregate(std::span<const double> values, std::uint32_t stats = kAllStats);

enum class Group { Fixation, Saccade, Blink, Pupil, Vergence, Physio, External };
const char* to_string(Group g);
std::optional<Group> group_from_string(const std::string& s);

struct Feature {
    std::string name;
    MaybeReal value;
    Group group = Group::External;
};

// Named feature values for one (person, probe). Names are unique.
class FeatureVector {
public:
    FeatureVector() = default;
    FeatureVector(std::string person_id, std::string probe_id)
        : person_id_(std::move(person_id)), probe_id_(std::move(probe_id)) {}

    const std::string& person_id() const { return person_id_; }
    const std::string& probe_id() const { return probe_id_; }

    // Throws on duplicate names or non-finite values.
    void add(std::string name, MaybeReal value, Group group);
    void add_stats(const std::string& prefix, const AggStats& stats, Group group);

    bool has(const std::string& name) const;
    MaybeReal get(const std::string& name) const;  // throws when the name is unknown
    const std::vector<Feature>& entries() const { return entries_; }
    std::size_t size() const { return entries_.size(); }

    // Early fusion: appends `other`'s entries; names must stay unique.
    void concat(const FeatureVector& other);

private:
    std::string person_id_;
    std::string probe_id_;
    std::vector<Feature> entries_;
};

struct Vergence {
    MaybeReal angle_rad;
    MaybeReal pupil_distance_px;
};

// Angle between the two gaze direction vectors and distance between the pupil
// image positions. Both missing unless both eyes are valid.
Vergence vergence(const gaze::GazeSample& sample);

// Mean pupil diameter over the first baseline_ms of a recording; missing (with a
// warning) when the span holds no valid pupil sample.
MaybeReal pupil_baseline(const gaze::SampleSeries& series, double baseline_ms = 50.0);

std::vector<MaybeReal> pupil_baseline_correct(std::span<const MaybeReal> values, MaybeReal baseline);

struct ExtractOptions {
    MaybeReal pupil_baseline_mm;  // person-level baseline; missing disables pupil features
};

// Gaze feature set for one accepted window. Throws if the window is not accepted.
FeatureVector extract_feature_vector(const gaze::Window& window, const gaze::ScreenGeometry& geometry,
                                     const ExtractOptions& options = {});

}  // namespace attnkit::features
