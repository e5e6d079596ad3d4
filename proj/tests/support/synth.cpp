#include "synth.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "attnkit/random.hpp"
#include "json.hpp"

namespace attnkit::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
    Rng rng(std::random_device{}());
    for (int attempt = 0; attempt < 100; ++attempt) {
        fs::path p = fs::temp_directory_path() / ("attnkit-test-" + std::to_string(rng() % 100000000));
        if (fs::create_directory(p)) {
            path_ = p;
            return;
        }
    }
    throw Error("TempDir: could not create a scratch directory");
}

TempDir::~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
}

void write_text(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    out << text;
    if (!out) throw Error("write_text: cannot write " + p.string());
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("read_text: cannot open " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

gaze::GazeSample valid_sample(std::int64_t t_us, Vec2 p, double pupil_mm) {
    gaze::GazeSample s;
    s.t_us = t_us;
    s.left_por = s.right_por = p;
    s.left_pupil_mm = s.right_pupil_mm = pupil_mm;
    s.left_pupil_pos = {p.x - 30.0, p.y};
    s.right_pupil_pos = {p.x + 30.0, p.y};
    s.valid_left = s.valid_right = true;
    return s;
}

gaze::GazeSample invalid_sample(std::int64_t t_us) {
    gaze::GazeSample s;
    s.t_us = t_us;
    return s;
}

gaze::SampleSeries build_trace(const std::vector<TraceBlock>& blocks, std::int64_t dt_us) {
    gaze::SampleSeries series;
    std::int64_t i = 0;
    for (const TraceBlock& b : blocks) {
        for (std::size_t k = 0; k < b.samples; ++k, ++i) {
            bool valid = b.valid;
            for (const auto& [off, len] : b.dropouts)
                if (k >= off && k < off + len) valid = false;
            series.samples.push_back(valid ? valid_sample(i * dt_us, b.point) : invalid_sample(i * dt_us));
        }
    }
    return series;
}

std::vector<TraceBlock> random_trace_blocks(std::uint64_t seed, std::size_t clusters) {
    Rng rng(seed);
    auto between = [&](std::size_t lo, std::size_t hi) { return lo + uniform_index(rng, hi - lo + 1); };
    auto gap_block = [&] {
        TraceBlock g;
        g.valid = false;
        g.samples = uniform01(rng) < 0.25 ? between(126, 160) : between(13, 40);
        return g;
    };
    std::vector<TraceBlock> out;
    if (uniform01(rng) < 0.2) out.push_back(gap_block());
    Vec2 prev{-1000.0, -1000.0};
    for (std::size_t c = 0; c < clusters; ++c) {
        TraceBlock b;
        do {
            b.point = {100.0 + 1700.0 * uniform01(rng), 100.0 + 900.0 * uniform01(rng)};
        } while (distance(b.point, prev) < 150.0);
        prev = b.point;
        b.samples = between(24, 80);
        if (b.samples >= 30 && uniform01(rng) < 0.5) {
            const std::size_t len = between(1, 6);
            b.dropouts.push_back({between(4, b.samples - 4 - len), len});
        }
        out.push_back(b);
        if (c + 1 < clusters && uniform01(rng) < 0.3) out.push_back(gap_block());
    }
    if (uniform01(rng) < 0.2) out.push_back(gap_block());
    return out;
}

std::vector<ExpectedEvent> stepwise_oracle(const std::vector<TraceBlock>& blocks, std::int64_t dt_us) {
    using gaze::EventKind;
    std::vector<ExpectedEvent> out;
    struct Span {
        std::size_t first, end;  // sample range [first, end)
        Vec2 point;
    };
    std::vector<std::vector<Span>> segments(1);
    std::size_t at = 0;
    for (const TraceBlock& b : blocks) {
        if (b.valid) {
            segments.back().push_back({at, at + b.samples, b.point});
        } else {
            // Whole-block invalid runs are at least 13 samples, so always blinks.
            if (static_cast<double>(b.samples * dt_us) / 1000.0 >= 50.0) {
                out.push_back({EventKind::Blink, static_cast<std::int64_t>(at) * dt_us,
                               static_cast<std::int64_t>(at + b.samples) * dt_us});
                segments.emplace_back();
            }
        }
        at += b.samples;
    }
    for (const auto& seg : segments) {
        struct Fix {
            std::size_t first, end;
            Vec2 point;
        };
        std::vector<Fix> fixes;
        for (std::size_t i = 0; i < seg.size(); ++i) {
            // A jump flags two samples on each side of it.
            const std::size_t first = seg[i].first + (i > 0 ? 2 : 0);
            const std::size_t end = seg[i].end - (i + 1 < seg.size() ? 2 : 0);
            if (static_cast<double>((end - first) * dt_us) / 1000.0 >= 80.0) fixes.push_back({first, end, seg[i].point});
        }
        for (std::size_t i = 0; i < fixes.size(); ++i) {
            out.push_back({EventKind::Fixation, static_cast<std::int64_t>(fixes[i].first) * dt_us,
                           static_cast<std::int64_t>(fixes[i].end) * dt_us});
            if (i + 1 < fixes.size())
                out.push_back({EventKind::Saccade, static_cast<std::int64_t>(fixes[i].end) * dt_us,
                               static_cast<std::int64_t>(fixes[i + 1].first) * dt_us,
                               distance(fixes[i].point, fixes[i + 1].point)});
        }
    }
    std::sort(out.begin(), out.end(), [](const ExpectedEvent& a, const ExpectedEvent& b) {
        return a.start_us != b.start_us ? a.start_us < b.start_us : a.kind < b.kind;
    });
    return out;
}

std::vector<ExpectedEvent> as_expected(const std::vector<gaze::Event>& events) {
    std::vector<ExpectedEvent> out;
    for (const auto& e : events)
        out.push_back({e.kind, e.start_us, e.end_us, e.kind == gaze::EventKind::Saccade ? e.saccade.length_px : 0.0});
    std::sort(out.begin(), out.end(), [](const ExpectedEvent& a, const ExpectedEvent& b) {
        return a.start_us != b.start_us ? a.start_us < b.start_us : a.kind < b.kind;
    });
    return out;
}

handraise::PosePerson synth_pose(const StudentScript& s, bool arm_up, std::uint64_t noise_seed) {
    Rng rng(noise_seed);
    handraise::PosePerson p;
    const double u = s.scale;
    auto put = [&](std::size_t idx, double dx, double dy) {
        p.keypoints[idx] = {s.neck.x + dx * u + 0.03 * u * standard_normal(rng),
                            s.neck.y + dy * u + 0.03 * u * standard_normal(rng), 0.9};
    };
    put(0, 0.0, -0.5);
    put(1, 0.0, 0.0);
    put(2, -0.6, 0.0);
    put(5, 0.6, 0.0);
    put(6, 0.7, 0.8);
    put(7, 0.7, 1.5);
    put(8, 0.0, 1.5);
    put(15, -0.12, -0.6);
    put(16, 0.12, -0.6);
    put(17, -0.25, -0.55);
    put(18, 0.25, -0.55);
    if (arm_up) {
        put(3, -0.75, -0.7);
        put(4, -0.7, -1.5);
    } else {
        put(3, -0.7, 0.8);
        put(4, -0.6, 1.5);
    }
    return p;
}

std::vector<handraise::PoseFrame> synth_video(const std::vector<StudentScript>& students, std::int64_t frames,
                                              std::uint64_t seed, double fps) {
    std::vector<handraise::PoseFrame> out;
    Rng rng(seed);
    for (std::int64_t f = 0; f < frames; ++f) {
        handraise::PoseFrame frame;
        frame.frame_index = f;
        frame.fps = fps;
        for (std::size_t s = 0; s < students.size(); ++s) {
            bool up = false;
            for (const auto& [a, b] : students[s].raised) up = up || (f >= a && f < b);
            frame.persons.push_back(synth_pose(students[s], up, derive_seed(seed, f * 1000 + static_cast<std::int64_t>(s))));
        }
        // Detector output order carries no identity.
        shuffle(std::span<handraise::PosePerson>(frame.persons), rng);
        out.push_back(std::move(frame));
    }
    return out;
}

std::string pose_jsonl(const std::vector<handraise::PoseFrame>& frames) {
    std::string out;
    for (const auto& f : frames) {
        nlohmann::json j;
        j["frame"] = f.frame_index;
        j["fps"] = f.fps;
        j["persons"] = nlohmann::json::array();
        for (const auto& p : f.persons) {
            nlohmann::json kp = nlohmann::json::array();
            for (const auto& k : p.keypoints) kp.push_back({k.x, k.y, k.confidence});
            j["persons"].push_back({{"kp", kp}});
        }
        out += j.dump() + "\n";
    }
    return out;
}

ml::Dataset two_class_dataset(const TwoClassSpec& spec, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t n = spec.persons * spec.windows;
    std::vector<int> labels(n, 0);
    const auto positives = static_cast<std::size_t>(std::llround(spec.prevalence * static_cast<double>(n)));
    std::fill(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(positives), 1);
    shuffle(std::span<int>(labels), rng);

    ml::Dataset d;
    for (std::size_t f = 0; f < spec.n_features; ++f) {
        char name[16];
        std::snprintf(name, sizeof name, "x%02zu", f);
        d.feature_names.push_back(name);
    }
    const double shift = spec.d * std::sqrt(1.0 + spec.person_sd * spec.person_sd);
    for (std::size_t p = 0; p < spec.persons; ++p) {
        std::vector<double> offset(spec.n_features);
        for (double& o : offset) o = spec.person_sd * standard_normal(rng);
        for (std::size_t w = 0; w < spec.windows; ++w) {
            const std::size_t r = p * spec.windows + w;
            char pid[16], wid[16];
            std::snprintf(pid, sizeof pid, "p%02zu", p + 1);
            std::snprintf(wid, sizeof wid, "w%02zu", w + 1);
            d.person_ids.push_back(pid);
            d.probe_ids.push_back(wid);
            std::vector<MaybeReal> row(spec.n_features);
            for (std::size_t f = 0; f < spec.n_features; ++f)
                row[f] = offset[f] + standard_normal(rng) + (f < spec.informative && labels[r] == 1 ? shift : 0.0);
            d.rows.push_back(std::move(row));
            d.labels.push_back(labels[r]);
        }
    }
    return d;
}

std::string gaze_csv(const gaze::SampleSeries& series) {
    std::ostringstream s;
    s.precision(17);
    s << "t_us,left_x,left_y,right_x,right_y,left_pupil_mm,right_pupil_mm,left_pupil_px_x,left_pupil_px_y,"
         "right_pupil_px_x,right_pupil_px_y,valid_left,valid_right\n";
    for (const auto& g : series.samples) {
        s << g.t_us << ',' << g.left_por.x << ',' << g.left_por.y << ',' << g.right_por.x << ',' << g.right_por.y << ','
          << g.left_pupil_mm << ',' << g.right_pupil_mm << ',' << g.left_pupil_pos.x << ',' << g.left_pupil_pos.y << ','
          << g.right_pupil_pos.x << ',' << g.right_pupil_pos.y << ',' << int(g.valid_left) << ',' << int(g.valid_right)
          << '\n';
    }
    return s.str();
}

std::string dataset_features_csv(const ml::Dataset& d) {
    ml::FeatureTable t;
    t.names = d.feature_names;
    t.person_ids = d.person_ids;
    t.probe_ids = d.probe_ids;
    t.values = d.rows;
    std::ostringstream s;
    ml::write_feature_csv(s, t);
    return s.str();
}

std::string dataset_labels_csv(const ml::Dataset& d) {
    std::ostringstream s;
    s << "person_id,probe_id,label" << (d.has_groups() ? ",group" : "") << '\n';
    for (std::size_t r = 0; r < d.size(); ++r) {
        s << d.person_ids[r] << ',' << d.probe_ids[r] << ',' << d.labels[r];
        if (d.has_groups()) s << ',' << d.groups[r];
        s << '\n';
    }
    return s.str();
}

std::size_t ScrBump::onset_index() const { return static_cast<std::size_t>(std::llround(onset_s * rate_hz)); }

std::size_t ScrBump::peak_index() const {
    return onset_index() + static_cast<std::size_t>(std::llround(rise_s * rate_hz));
}

physio::PhysioSeries scr_bump_series(const ScrBump& b) {
    physio::PhysioSeries s;
    s.person_id = "bump";
    s.channel = physio::Channel::EDA;
    s.rate_hz = b.rate_hz;
    const auto n = static_cast<std::size_t>(std::llround(b.total_s * b.rate_hz));
    const std::size_t on = b.onset_index(), pk = b.peak_index();
    for (std::size_t i = 0; i < n; ++i) {
        double v = b.base;
        if (i > on && i <= pk) v += b.amplitude * static_cast<double>(i - on) / static_cast<double>(pk - on);
        else if (i == pk + 1) v += b.amplitude;
        else if (i > pk + 1) v += b.amplitude * std::exp(-static_cast<double>(i - pk - 1) / b.rate_hz / b.tau_s);
        s.values.push_back(v);
    }
    return s;
}

Classroom synthetic_classroom(std::uint64_t seed, std::size_t videos, std::size_t students, std::int64_t frames,
                              double fps) {
    Classroom c;
    Rng rng(seed);
    for (std::size_t v = 0; v < videos; ++v) {
        const std::string vid = "v" + std::to_string(v + 1);
        std::vector<StudentScript> scripts(students);
        for (std::size_t s = 0; s < students; ++s) {
            scripts[s].neck = {200.0 + 300.0 * static_cast<double>(s), 300.0 + 40.0 * uniform01(rng)};
            scripts[s].scale = 50.0 + 20.0 * uniform01(rng);
            // Raises of 3-6 s, at least 5 s apart, so none of them merge.
            std::int64_t at = static_cast<std::int64_t>(uniform_index(rng, 120));
            while (true) {
                const auto len = static_cast<std::int64_t>(72 + uniform_index(rng, 73));
                if (at + len > frames) break;
                if (uniform01(rng) < 0.6) scripts[s].raised.push_back({at, at + len});
                at += len + 120 + static_cast<std::int64_t>(uniform_index(rng, 120));
            }
        }
        auto stream = synth_video(scripts, frames, derive_seed(seed, v), fps);
        handraise::Video video;
        video.video_id = vid;
        video.fps = fps;
        video.tracklets = handraise::track(stream);
        std::map<std::string, long long> counts;
        for (const auto& t : video.tracklets) {
            const Vec2 neck = *(*t.frames.front())[1];
            std::size_t best = 0;
            for (std::size_t s = 1; s < students; ++s)
                if (distance(scripts[s].neck, neck) < distance(scripts[best].neck, neck)) best = s;
            counts[std::to_string(t.student_id)] = static_cast<long long>(scripts[best].raised.size());
            for (const auto& [a, b] : scripts[best].raised)
                c.labels.push_back({vid, t.student_id, static_cast<double>(a) / fps, static_cast<double>(b) / fps});
        }
        c.videos.push_back(std::move(video));
        c.frames.push_back(std::move(stream));
        c.raise_counts.push_back(std::move(counts));
    }
    return c;
}

physio::PhysioSeries sine_series(double freq_hz, double seconds, double rate_hz, double phase) {
    physio::PhysioSeries s;
    s.person_id = "sine";
    s.channel = physio::Channel::BVP;
    s.rate_hz = rate_hz;
    const auto n = static_cast<std::size_t>(std::llround(seconds * rate_hz));
    for (std::size_t i = 0; i < n; ++i)
        s.values.push_back(std::sin(2.0 * 3.141592653589793 * freq_hz * static_cast<double>(i) / rate_hz + phase));
    return s;
}

}  // namespace attnkit::testing
