#include "attnkit/handraise.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <fstream>
#include <numeric>
#include <set>

#include "attnkit/csv.hpp"
#include "json.hpp"

namespace attnkit::handraise {

namespace {

double number(const nlohmann::json& v, const std::string& what, const std::string& source, std::size_t line) {
    if (!v.is_number()) throw IngestError(source + ": " + what + " must be a number", line);
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw IngestError(source + ": " + what + " must be finite", line);
    return d;
}

}  // namespace

std::vector<PoseFrame> load_pose_frames(std::istream& in, const std::string& source) {
    std::vector<PoseFrame> frames;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::parse_error&) {
            throw IngestError(source + ": malformed JSON", line);
        }
        if (!j.is_object() || !j.contains("frame") || !j["frame"].is_number_integer())
            throw IngestError(source + ": missing integer 'frame'", line);
        PoseFrame f;
        f.frame_index = j["frame"].get<std::int64_t>();
        if (j.contains("fps")) {
            f.fps = number(j["fps"], "fps", source, line);
            if (f.fps <= 0.0) throw IngestError(source + ": fps must be positive", line);
        }
        if (!frames.empty() && f.frame_index <= frames.back().frame_index)
            throw IngestError(source + ": frame indices must strictly increase", line);
        if (!j.contains("persons") || !j["persons"].is_array()) throw IngestError(source + ": missing 'persons' array", line);
        for (const auto& jp : j["persons"]) {
            if (!jp.is_object() || !jp.contains("kp") || !jp["kp"].is_array() || jp["kp"].size() != kBodyKeypoints)
                throw IngestError(source + ": each person needs 'kp' with 25 keypoints", line);
            PosePerson p;
            for (std::size_t k = 0; k < kBodyKeypoints; ++k) {
                const auto& kp = jp["kp"][k];
                if (!kp.is_array() || kp.size() != 3) throw IngestError(source + ": keypoint must be [x, y, c]", line);
                Keypoint& out = p.keypoints[k];
                out.x = number(kp[0], "keypoint x", source, line);
                out.y = number(kp[1], "keypoint y", source, line);
                out.confidence = number(kp[2], "keypoint confidence", source, line);
                if (out.confidence < 0.0 || out.confidence > 1.0)
                    throw IngestError(source + ": keypoint confidence outside [0, 1]", line);
            }
            f.persons.push_back(p);
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

std::vector<PoseFrame> load_pose_frames(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path);
    return load_pose_frames(in, path);
}

const std::array<std::size_t, kUpperBodyKeypoints>& upper_body_indices() {
    static const std::array<std::size_t, kUpperBodyKeypoints> idx{0, 1, 2, 3, 4, 5, 6, 7, 8, 15, 16, 17, 18};
    return idx;
}

const std::array<const char*, kUpperBodyKeypoints>& upper_body_names() {
    static const std::array<const char*, kUpperBodyKeypoints> names{
        "nose", "neck", "rshoulder", "relbow", "rwrist", "lshoulder", "lelbow",
        "lwrist", "midhip", "reye", "leye", "rear", "lear"};
    return names;
}

namespace {

enum Joint : std::size_t {
    kNose = 0, kNeck, kRShoulder, kRElbow, kRWrist, kLShoulder, kLElbow, kLWrist, kMidHip, kREye, kLEye, kREar, kLEar
};

}  // namespace

const std::array<std::pair<std::size_t, std::size_t>, 12>& bones() {
    static const std::array<std::pair<std::size_t, std::size_t>, 12> b{{{kNeck, kNose},
                                                                        {kNeck, kRShoulder},
                                                                        {kRShoulder, kRElbow},
                                                                        {kRElbow, kRWrist},
                                                                        {kNeck, kLShoulder},
                                                                        {kLShoulder, kLElbow},
                                                                        {kLElbow, kLWrist},
                                                                        {kNeck, kMidHip},
                                                                        {kNose, kREye},
                                                                        {kREye, kREar},
                                                                        {kNose, kLEye},
                                                                        {kLEye, kLEar}}};
    return b;
}

Skeleton upper_body(const PosePerson& p) {
    Skeleton s;
    for (std::size_t i = 0; i < kUpperBodyKeypoints; ++i) {
        const Keypoint& k = p.keypoints[upper_body_indices()[i]];
        if (k.present()) s[i] = Vec2{k.x, k.y};
    }
    return s;
}

double iou(const Box& a, const Box& b) {
    const Box inter{std::max(a.x0, b.x0), std::max(a.y0, b.y0), std::min(a.x1, b.x1), std::min(a.y1, b.y1)};
    const double i = inter.area();
    const double u = a.area() + b.area() - i;
    return u > 0.0 ? i / u : 0.0;
}

std::optional<Box> torso_box(const PosePerson& p) {
    std::optional<Box> box;
    std::size_t n = 0;
    for (std::size_t k : {std::size_t{1}, std::size_t{2}, std::size_t{5}, std::size_t{8}}) {
        const Keypoint& kp = p.keypoints[k];
        if (!kp.present()) continue;
        ++n;
        if (!box) box = Box{kp.x, kp.y, kp.x, kp.y};
        box->x0 = std::min(box->x0, kp.x);
        box->y0 = std::min(box->y0, kp.y);
        box->x1 = std::max(box->x1, kp.x);
        box->y1 = std::max(box->y1, kp.y);
    }
    if (n < 2 || !box || box->area() <= 0.0) return std::nullopt;
    return box;
}

std::vector<Tracklet> track(const std::vector<PoseFrame>& frames, const TrackOptions& options) {
    std::vector<Tracklet> out;
    struct Active {
        std::size_t tracklet;
        std::int64_t last_frame;
        Box last_box;
    };
    std::vector<Active> active;
    for (const PoseFrame& f : frames) {
        std::erase_if(active, [&](const Active& a) { return f.frame_index - a.last_frame - 1 > options.max_gap_frames; });

        std::vector<std::pair<std::size_t, Box>> dets;
        for (std::size_t p = 0; p < f.persons.size(); ++p)
            if (auto b = torso_box(f.persons[p])) dets.push_back({p, *b});

        struct Candidate {
            double iou;
            std::size_t active;
            std::size_t det;
        };
        std::vector<Candidate> cand;
        for (std::size_t a = 0; a < active.size(); ++a)
            for (std::size_t d = 0; d < dets.size(); ++d) {
                const double v = iou(active[a].last_box, dets[d].second);
                if (v > options.iou_threshold) cand.push_back({v, a, d});
            }
        std::stable_sort(cand.begin(), cand.end(), [](const Candidate& x, const Candidate& y) { return x.iou > y.iou; });
        std::vector<bool> a_used(active.size(), false), d_used(dets.size(), false);
        for (const Candidate& c : cand) {
            if (a_used[c.active] || d_used[c.det]) continue;
            a_used[c.active] = d_used[c.det] = true;
            Active& a = active[c.active];
            Tracklet& t = out[a.tracklet];
            const std::int64_t gap = f.frame_index - a.last_frame - 1;
            if (gap > 0) {
                t.gaps.push_back({a.last_frame + 1, gap});
                t.frames.resize(t.frames.size() + static_cast<std::size_t>(gap));
                t.boxes.resize(t.boxes.size() + static_cast<std::size_t>(gap));
            }
            t.frames.push_back(upper_body(f.persons[dets[c.det].first]));
            t.boxes.push_back(dets[c.det].second);
            a.last_frame = f.frame_index;
            a.last_box = dets[c.det].second;
        }
        for (std::size_t d = 0; d < dets.size(); ++d) {
            if (d_used[d]) continue;
            Tracklet t;
            t.student_id = out.size() + 1;
            t.start_frame = f.frame_index;
            t.frames.push_back(upper_body(f.persons[dets[d].first]));
            t.boxes.push_back(dets[d].second);
            active.push_back({out.size(), f.frame_index, dets[d].second});
            out.push_back(std::move(t));
        }
    }
    return out;
}

namespace {

struct Layout {
    std::vector<std::string> names;
    std::vector<std::pair<std::size_t, std::size_t>> distances;
    std::vector<std::array<std::size_t, 3>> angles;  // angle at the middle joint
    std::vector<std::pair<std::size_t, std::size_t>> lines;  // (joint, bone)
};

const Layout& layout() {
    static const Layout l = [] {
        Layout l;
        const auto& n = upper_body_names();
        for (std::size_t i = 0; i < kUpperBodyKeypoints; ++i) {
            l.names.push_back(std::string("x.") + n[i]);
            l.names.push_back(std::string("y.") + n[i]);
        }
        l.distances = {{kRWrist, kNose},      {kLWrist, kNose},      {kRWrist, kRShoulder}, {kLWrist, kLShoulder},
                       {kRWrist, kLShoulder}, {kLWrist, kRShoulder}, {kRElbow, kNose},      {kLElbow, kNose}};
        for (const auto& [a, b] : l.distances) l.names.push_back(std::string("dist.") + n[a] + "_" + n[b]);
        l.angles = {{kRShoulder, kRElbow, kRWrist}, {kLShoulder, kLElbow, kLWrist}, {kNeck, kRShoulder, kRElbow},
                    {kNeck, kLShoulder, kLElbow},   {kNose, kNeck, kRShoulder},     {kNose, kNeck, kLShoulder}};
        for (const auto& a : l.angles) l.names.push_back(std::string("angle.") + n[a[0]] + "_" + n[a[1]] + "_" + n[a[2]]);
        for (std::size_t b = 0; b < bones().size(); ++b) {
            const auto [p, q] = bones()[b];
            for (std::size_t j = 0; j < kUpperBodyKeypoints; ++j) {
                if (j == p || j == q) continue;
                l.lines.push_back({j, b});
                l.names.push_back(std::string("line.") + n[j] + "." + n[p] + "_" + n[q]);
            }
        }
        return l;
    }();
    return l;
}

double cross(Vec2 a, Vec2 b) { return a.x * b.y - a.y * b.x; }
double dot(Vec2 a, Vec2 b) { return a.x * b.x + a.y * b.y; }

}  // namespace

const std::vector<std::string>& frame_feature_names() { return layout().names; }

std::optional<std::vector<MaybeReal>> frame_features(const Skeleton& s) {
    if (!s[kNeck] || !s[kMidHip]) return std::nullopt;
    const Vec2 origin = *s[kNeck];
    const double scale = distance(origin, *s[kMidHip]);
    if (!(scale >= 1.0)) return std::nullopt;

    Skeleton p;
    for (std::size_t i = 0; i < kUpperBodyKeypoints; ++i)
        if (s[i]) p[i] = (*s[i] - origin) * (1.0 / scale);

    const Layout& l = layout();
    std::vector<MaybeReal> f;
    f.reserve(kFrameFeatures);
    for (std::size_t i = 0; i < kUpperBodyKeypoints; ++i) {
        f.push_back(p[i] ? MaybeReal(p[i]->x) : std::nullopt);
        f.push_back(p[i] ? MaybeReal(p[i]->y) : std::nullopt);
    }
    for (const auto& [a, b] : l.distances)
        f.push_back(p[a] && p[b] ? MaybeReal(distance(*p[a], *p[b])) : std::nullopt);
    for (const auto& [a, m, b] : l.angles) {
        if (!p[a] || !p[m] || !p[b]) {
            f.push_back(std::nullopt);
            continue;
        }
        const Vec2 u = *p[a] - *p[m], v = *p[b] - *p[m];
        f.push_back(std::atan2(std::abs(cross(u, v)), dot(u, v)));
    }
    for (const auto& [j, b] : l.lines) {
        const auto [a, c] = bones()[b];
        if (!p[j] || !p[a] || !p[c]) {
            f.push_back(std::nullopt);
            continue;
        }
        const Vec2 d = *p[c] - *p[a];
        const double len = d.norm();
        f.push_back(len > 0.0 ? std::abs(cross(d, *p[j] - *p[a])) / len : distance(*p[j], *p[a]));
    }
    return f;
}

const std::vector<std::string>& window_feature_names() {
    static const std::vector<std::string> names = [] {
        std::vector<std::string> n;
        for (const auto& f : frame_feature_names()) n.push_back("mean." + f);
        for (const auto& f : frame_feature_names()) n.push_back("std." + f);
        return n;
    }();
    return names;
}

namespace {

std::optional<WindowFeatures> window_at(const std::vector<std::optional<std::vector<MaybeReal>>>& per_frame,
                                        std::size_t first) {
    std::size_t valid = 0;
    for (std::size_t i = first; i < first + kWindowFrames; ++i) valid += per_frame[i].has_value();
    if (2 * valid < kWindowFrames) return std::nullopt;
    WindowFeatures w;
    w.first_frame = first;
    w.values.assign(2 * kFrameFeatures, std::nullopt);
    for (std::size_t k = 0; k < kFrameFeatures; ++k) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = first; i < first + kWindowFrames; ++i)
            if (per_frame[i] && (*per_frame[i])[k]) {
                sum += *(*per_frame[i])[k];
                ++n;
            }
        if (n == 0) continue;
        const double mean = sum / static_cast<double>(n);
        double ss = 0.0;
        for (std::size_t i = first; i < first + kWindowFrames; ++i)
            if (per_frame[i] && (*per_frame[i])[k]) ss += (*(*per_frame[i])[k] - mean) * (*(*per_frame[i])[k] - mean);
        w.values[k] = mean;
        w.values[kFrameFeatures + k] = std::sqrt(ss / static_cast<double>(n));
    }
    return w;
}

}  // namespace

std::vector<WindowFeatures> make_windows(const Tracklet& t, WindowMode mode) {
    std::vector<WindowFeatures> out;
    if (t.length() < kWindowFrames) {
        warn("make_windows: tracklet " + std::to_string(t.student_id) + " has " + std::to_string(t.length()) +
             " frames, fewer than one window");
        return out;
    }
    std::vector<std::optional<std::vector<MaybeReal>>> per_frame(t.length());
    for (std::size_t i = 0; i < t.length(); ++i)
        if (t.frames[i]) per_frame[i] = frame_features(*t.frames[i]);
    const std::size_t stride = mode == WindowMode::Train ? kWindowFrames : kAnnotateStride;
    for (std::size_t first = 0; first + kWindowFrames <= t.length(); first += stride)
        if (auto w = window_at(per_frame, first)) out.push_back(std::move(*w));
    return out;
}

std::vector<double> frame_probabilities(std::size_t n_frames, const std::vector<WindowFeatures>& windows,
                                        const std::vector<double>& window_probability) {
    if (windows.size() != window_probability.size()) throw Error("frame_probabilities: one probability per window");
    std::vector<double> sum(n_frames, 0.0);
    std::vector<std::size_t> count(n_frames, 0);
    for (std::size_t w = 0; w < windows.size(); ++w)
        for (std::size_t i = windows[w].first_frame; i < std::min(n_frames, windows[w].first_frame + kWindowFrames); ++i) {
            sum[i] += window_probability[w];
            ++count[i];
        }
    for (std::size_t i = 0; i < n_frames; ++i) sum[i] = count[i] > 0 ? sum[i] / static_cast<double>(count[i]) : 0.0;
    return sum;
}

std::vector<HandRaiseEvent> postprocess(const std::vector<double>& prob, double fps, std::size_t student_id,
                                        double time_offset_s, const PostprocessOptions& options) {
    if (!(fps > 0.0)) throw Error("postprocess: fps must be positive");
    struct Run {
        std::size_t first, last;  // inclusive frame range
    };
    std::vector<Run> runs;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        if (!(prob[i] > options.threshold)) continue;
        if (!runs.empty() && runs.back().last + 1 == i) runs.back().last = i;
        else runs.push_back({i, i});
    }
    std::vector<Run> merged;
    for (const Run& r : runs) {
        if (!merged.empty()) {
            const double gap_s = static_cast<double>(r.first - (merged.back().last + 1)) / fps;
            if (gap_s < options.merge_gap_s) {
                merged.back().last = r.last;
                continue;
            }
        }
        merged.push_back(r);
    }
    std::vector<HandRaiseEvent> out;
    for (const Run& r : merged) {
        const double duration = static_cast<double>(r.last + 1 - r.first) / fps;
        if (duration < options.min_duration_s) continue;
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t i = r.first; i <= r.last; ++i)
            if (prob[i] > options.threshold) {
                sum += prob[i];
                ++n;
            }
        out.push_back({student_id, time_offset_s + static_cast<double>(r.first) / fps,
                       time_offset_s + static_cast<double>(r.last + 1) / fps, sum / static_cast<double>(n)});
    }
    return out;
}

std::vector<HandRaiseEvent> annotate(const Tracklet& t, const ml::FittedPipeline& model, double fps,
                                     const PostprocessOptions& options) {
    if (model.transform.input_names != window_feature_names())
        throw Error("annotate: model was trained on a different feature layout");
    const auto windows = make_windows(t, WindowMode::Annotate);
    if (windows.empty()) return {};
    std::vector<std::vector<MaybeReal>> rows;
    for (const auto& w : windows) rows.push_back(w.values);
    const auto p = frame_probabilities(t.length(), windows, model.predict(rows));
    return postprocess(p, fps, t.student_id, static_cast<double>(t.start_frame) / fps, options);
}

namespace {

std::vector<HandRaiseEvent> flatten(std::vector<std::vector<HandRaiseEvent>>& per) {
    std::vector<HandRaiseEvent> out;
    for (auto& v : per) out.insert(out.end(), v.begin(), v.end());
    std::stable_sort(out.begin(), out.end(), [](const HandRaiseEvent& a, const HandRaiseEvent& b) {
        return a.student_id != b.student_id ? a.student_id < b.student_id : a.start_s < b.start_s;
    });
    return out;
}

}  // namespace

std::vector<HandRaiseEvent> annotate_all(const std::vector<Tracklet>& tracklets, const ml::FittedPipeline& model,
                                         double fps, const PostprocessOptions& options) {
    std::vector<std::vector<HandRaiseEvent>> per(tracklets.size());
    std::vector<std::exception_ptr> errors(tracklets.size());
    const auto n = static_cast<std::ptrdiff_t>(tracklets.size());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto k = static_cast<std::size_t>(i);
        try {
            per[k] = annotate(tracklets[k], model, fps, options);
        } catch (...) {
            errors[k] = std::current_exception();
        }
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);
    return flatten(per);
}

std::vector<HandRaiseEvent> annotate_all_serial(const std::vector<Tracklet>& tracklets,
                                                const ml::FittedPipeline& model, double fps,
                                                const PostprocessOptions& options) {
    std::vector<std::vector<HandRaiseEvent>> per;
    for (const auto& t : tracklets) per.push_back(annotate(t, model, fps, options));
    return flatten(per);
}

std::map<std::string, long long> count_events(const std::vector<HandRaiseEvent>& events) {
    std::map<std::string, long long> out;
    for (const auto& e : events) ++out[std::to_string(e.student_id)];
    return out;
}

double evaluate_counts(const std::map<std::string, long long>& predicted, const std::map<std::string, long long>& truth) {
    std::string missing_pred, missing_truth;
    for (const auto& [k, v] : truth)
        if (!predicted.count(k)) missing_pred += (missing_pred.empty() ? "" : ", ") + k;
    for (const auto& [k, v] : predicted)
        if (!truth.count(k)) missing_truth += (missing_truth.empty() ? "" : ", ") + k;
    if (!missing_pred.empty() || !missing_truth.empty()) {
        std::string msg = "evaluate_counts: student keys differ;";
        if (!missing_pred.empty()) msg += " missing from predictions: " + missing_pred + ";";
        if (!missing_truth.empty()) msg += " missing from truth: " + missing_truth + ";";
        msg.pop_back();
        throw Error(msg);
    }
    if (truth.empty()) throw Error("evaluate_counts: no students");
    double sum = 0.0;
    for (const auto& [k, v] : truth) sum += std::abs(static_cast<double>(predicted.at(k) - v));
    return sum / static_cast<double>(truth.size());
}

std::vector<LabelInterval> read_label_intervals(std::istream& in, const std::string& source) {
    const csv::Table t = csv::Table::read(in, source);
    const std::size_t vc = t.require_column("video_id"), sc = t.require_column("student_id"),
                      bc = t.require_column("start_s"), ec = t.require_column("end_s");
    std::vector<LabelInterval> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto& row = t.row(r);
        if (row.size() != t.header().size()) throw IngestError(source + ": wrong field count", t.line_number(r));
        const auto s = csv::parse_int(row[sc]);
        const auto b = csv::parse_real(row[bc]), e = csv::parse_real(row[ec]);
        if (!s || *s < 1 || !b || !e || !(*e > *b))
            throw IngestError(source + ": need student_id >= 1 and start_s < end_s", t.line_number(r));
        out.push_back({row[vc], static_cast<std::size_t>(*s), *b, *e});
    }
    return out;
}

ml::Dataset window_dataset(const std::vector<Video>& videos, const std::vector<LabelInterval>& labels) {
    ml::Dataset d;
    d.feature_names = window_feature_names();
    for (const Video& v : videos) {
        for (const Tracklet& t : v.tracklets) {
            std::vector<const LabelInterval*> mine;
            for (const auto& l : labels)
                if (l.video_id == v.video_id && l.student_id == t.student_id) mine.push_back(&l);
            for (const auto& w : make_windows(t, WindowMode::Train)) {
                std::size_t inside = 0;
                for (std::size_t i = 0; i < kWindowFrames; ++i) {
                    const double mid = (static_cast<double>(t.start_frame + static_cast<std::int64_t>(w.first_frame + i)) + 0.5) / v.fps;
                    for (const auto* l : mine)
                        if (mid >= l->start_s && mid < l->end_s) {
                            ++inside;
                            break;
                        }
                }
                d.person_ids.push_back(v.video_id);
                d.probe_ids.push_back(std::to_string(t.student_id) + ":" +
                                      std::to_string(t.start_frame + static_cast<std::int64_t>(w.first_frame)));
                d.rows.push_back(w.values);
                d.labels.push_back(2 * inside >= kWindowFrames ? 1 : 0);
            }
        }
    }
    return d;
}

ml::PipelineSpec default_handraise_spec() {
    ml::PipelineSpec s;
    s.model.kind = ml::ModelKind::RandomForest;
    s.model.class_weighting = true;
    return s;
}

ml::FittedPipeline train_handraise(const ml::Dataset& windows, const ml::PipelineSpec& spec, std::uint64_t seed) {
    std::vector<std::size_t> rows(windows.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return ml::fit_pipeline(windows, rows, spec, seed);
}

}  // namespace attnkit::handraise
