#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "attnkit/common.hpp"
#include "attnkit/ml/dataset.hpp"
#include "attnkit/ml/pipeline.hpp"

namespace attnkit::handraise {

inline constexpr std::size_t kBodyKeypoints = 25;
inline constexpr std::size_t kUpperBodyKeypoints = 13;
inline constexpr double kDefaultFps = 24.0;

struct Keypoint {
    double x = 0.0;
    double y = 0.0;
    double confidence = 0.0;  // 0 marks a missing keypoint
    bool present() const { return confidence > 0.0; }
};

struct PosePerson {
    std::array<Keypoint, kBodyKeypoints> keypoints{};
};

struct PoseFrame {
    std::int64_t frame_index = 0;
    double fps = kDefaultFps;
    std::vector<PosePerson> persons;
};

// JSON lines, one frame per line: {"frame": int, "fps": number?, "persons": [{"kp": [[x, y, c] x 25]}]}.
// Frame indices must strictly increase. Errors carry the line number.
std::vector<PoseFrame> load_pose_frames(std::istream& in, const std::string& source = "<stream>");
std::vector<PoseFrame> load_pose_frames(const std::string& path);

// Upper-body subset, as indices into the 25-point body layout, in feature order:
// nose, neck, rshoulder, relbow, rwrist, lshoulder, lelbow, lwrist, midhip, reye, leye, rear, lear.
const std::array<std::size_t, kUpperBodyKeypoints>& upper_body_indices();
const std::array<const char*, kUpperBodyKeypoints>& upper_body_names();

// Bones as pairs of upper-body positions: neck-nose, neck-rshoulder, rshoulder-relbow,
// relbow-rwrist, neck-lshoulder, lshoulder-lelbow, lelbow-lwrist, neck-midhip,
// nose-reye, reye-rear, nose-leye, leye-lear.
const std::array<std::pair<std::size_t, std::size_t>, 12>& bones();

using Skeleton = std::array<std::optional<Vec2>, kUpperBodyKeypoints>;
Skeleton upper_body(const PosePerson& p);

struct Box {
    double x0 = 0.0, y0 = 0.0, x1 = 0.0, y1 = 0.0;
    double area() const { return std::max(0.0, x1 - x0) * std::max(0.0, y1 - y0); }
};

double iou(const Box& a, const Box& b);

// Bounding box of the present torso keypoints (neck, shoulders, mid-hip); absent
// when fewer than two are present or the box has no area.
std::optional<Box> torso_box(const PosePerson& p);

struct Gap {
    std::int64_t start_frame = 0;
    std::int64_t length = 0;
};

struct Tracklet {
    std::size_t student_id = 0;  // 1-based, in order of first appearance
    std::int64_t start_frame = 0;
    std::vector<std::optional<Skeleton>> frames;  // one per frame index from start_frame; bridged gaps are empty
    std::vector<std::optional<Box>> boxes;
    std::vector<Gap> gaps;

    std::size_t length() const { return frames.size(); }
};

struct TrackOptions {
    double iou_threshold = 0.3;
    std::int64_t max_gap_frames = 12;
};

// Greedy frame-to-frame matching of torso boxes by descending IOU (ties by
// tracklet then detection order). A tracklet unseen for more than max_gap frames is closed.
std::vector<Tracklet> track(const std::vector<PoseFrame>& frames, const TrackOptions& options = {});

inline constexpr std::size_t kFrameFeatures = 172;

// Names of the 172 per-frame features: x./y. coordinates, dist., angle. and line. entries.
const std::vector<std::string>& frame_feature_names();

// Missing when the neck or mid-hip is absent or closer than 1 px apart. Entries that
// involve an absent keypoint are missing.
std::optional<std::vector<MaybeReal>> frame_features(const Skeleton& s);

enum class WindowMode { Train, Annotate };

inline constexpr std::size_t kWindowFrames = 48;
inline constexpr std::size_t kAnnotateStride = 8;

struct WindowFeatures {
    std::size_t first_frame = 0;  // offset into the tracklet
    std::vector<MaybeReal> values;  // per-feature mean then population standard deviation
};

const std::vector<std::string>& window_feature_names();

// Train mode: non-overlapping 48-frame windows (remainder dropped). Annotate mode:
// stride 8. Windows where fewer than half the frames have features are skipped.
std::vector<WindowFeatures> make_windows(const Tracklet& t, WindowMode mode);

struct HandRaiseEvent {
    std::size_t student_id = 0;
    double start_s = 0.0;
    double end_s = 0.0;
    double mean_probability = 0.0;
};

struct PostprocessOptions {
    double threshold = 0.5;
    double merge_gap_s = 4.0;
    double min_duration_s = 1.0;
};

// Frames above threshold form runs [first / fps, (last + 1) / fps). Runs separated by
// less than merge_gap_s merge, then events shorter than min_duration_s are dropped.
// mean_probability averages the above-threshold frames of each event.
std::vector<HandRaiseEvent> postprocess(const std::vector<double>& frame_probability, double fps,
                                        std::size_t student_id = 0, double time_offset_s = 0.0,
                                        const PostprocessOptions& options = {});

// Per-frame mean over covering windows; uncovered frames get 0.
std::vector<double> frame_probabilities(std::size_t n_frames, const std::vector<WindowFeatures>& windows,
                                        const std::vector<double>& window_probability);

std::vector<HandRaiseEvent> annotate(const Tracklet& t, const ml::FittedPipeline& model, double fps,
                                     const PostprocessOptions& options = {});

// Tracklets annotated in parallel; events ordered by student then start.
std::vector<HandRaiseEvent> annotate_all(const std::vector<Tracklet>& tracklets, const ml::FittedPipeline& model,
                                         double fps, const PostprocessOptions& options = {});
std::vector<HandRaiseEvent> annotate_all_serial(const std::vector<Tracklet>& tracklets,
                                                const ml::FittedPipeline& model, double fps,
                                                const PostprocessOptions& options = {});

std::map<std::string, long long> count_events(const std::vector<HandRaiseEvent>& events);

// Mean absolute count error. Throws listing students absent from either side.
double evaluate_counts(const std::map<std::string, long long>& predicted, const std::map<std::string, long long>& truth);

struct LabelInterval {
    std::string video_id;
    std::size_t student_id = 0;
    double start_s = 0.0;
    double end_s = 0.0;
};

// labels CSV: video_id,student_id,start_s,end_s
std::vector<LabelInterval> read_label_intervals(std::istream& in, const std::string& source = "<stream>");

struct Video {
    std::string video_id;
    double fps = kDefaultFps;
    std::vector<Tracklet> tracklets;
};

// One row per train-mode window. person_id holds the video id so person-independent
// folds become video-independent; a window is positive when at least half its frames
// fall inside a labelled interval of the same student.
ml::Dataset window_dataset(const std::vector<Video>& videos, const std::vector<LabelInterval>& labels);

// Random forest with class weighting.
ml::PipelineSpec default_handraise_spec();
ml::FittedPipeline train_handraise(const ml::Dataset& windows, const ml::PipelineSpec& spec, std::uint64_t seed);

}  // namespace attnkit::handraise
