#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "attnkit/features.hpp"
#include "attnkit/random.hpp"
#include "synth.hpp"

using namespace attnkit;
using namespace attnkit::features;
using attnkit::testing::valid_sample;

namespace {

// Independent formulas: textbook sample moments, quantiles by scanning the ECDF.
struct Reference {
    double mean, median, std, q25, q75, skew, kurtosis;
};

Reference reference_stats(const std::vector<double>& x) {
    const auto n = static_cast<double>(x.size());
    long double sum = 0;
    for (double v : x) sum += v;
    const double m = static_cast<double>(sum / x.size());
    long double ss = 0;
    for (double v : x) ss += (v - m) * (v - m);
    const double s = std::sqrt(static_cast<double>(ss) / (n - 1));
    long double z3 = 0, z4 = 0;
    for (double v : x) {
        const long double z = (v - m) / s;
        z3 += z * z * z;
        z4 += z * z * z * z;
    }
    std::vector<double> sorted = x;
    std::sort(sorted.begin(), sorted.end());
    // Smallest value whose ECDF reaches p, averaged with the next one when it lands exactly.
    auto q = [&](double p) {
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            const double F = static_cast<double>(i + 1) / n;
            if (F > p) return sorted[i];
            if (F == p) return 0.5 * (sorted[i] + sorted[std::min(i + 1, sorted.size() - 1)]);
        }
        return sorted.back();
    };
    Reference r;
    r.mean = m;
    r.median = q(0.5);
    r.std = s;
    r.q25 = q(0.25);
    r.q75 = q(0.75);
    r.skew = static_cast<double>(n / ((n - 1) * (n - 2)) * z3);
    r.kurtosis = static_cast<double>(n * (n + 1) / ((n - 1) * (n - 2) * (n - 3)) * z4) -
                 3 * (n - 1) * (n - 1) / ((n - 2) * (n - 3));
    return r;
}

gaze::Event fixation(std::int64_t start_ms, std::int64_t dur_ms, Vec2 c = {500, 500}) {
    gaze::Event e;
    e.kind = gaze::EventKind::Fixation;
    e.start_us = start_ms * 1000;
    e.end_us = (start_ms + dur_ms) * 1000;
    e.fixation.centroid = c;
    e.fixation.mean_pupil_mm = 3.0;
    return e;
}

gaze::Event saccade(std::int64_t start_ms, std::int64_t dur_ms, double dx) {
    gaze::Event e;
    e.kind = gaze::EventKind::Saccade;
    e.start_us = start_ms * 1000;
    e.end_us = (start_ms + dur_ms) * 1000;
    e.saccade.direction_px = dx;
    e.saccade.length_px = std::abs(dx);
    return e;
}

gaze::Event blink(std::int64_t start_ms, std::int64_t dur_ms) {
    gaze::Event e;
    e.kind = gaze::EventKind::Blink;
    e.start_us = start_ms * 1000;
    e.end_us = (start_ms + dur_ms) * 1000;
    return e;
}

gaze::Window window_with(std::vector<gaze::Event> events) {
    gaze::Window w;
    w.person_id = "p1";
    w.probe_id = "q1";
    w.start_us = 0;
    w.end_us = 10'000'000;
    w.events = std::move(events);
    return w;
}

}  // namespace

TEST(Aggregate, SymmetricTriple) {
    const std::vector<double> x{1, 2, 3};
    const auto a = aggregate(x);
    EXPECT_DOUBLE_EQ(*a.mean, 2);
    EXPECT_DOUBLE_EQ(*a.median, 2);
    EXPECT_DOUBLE_EQ(*a.min, 1);
    EXPECT_DOUBLE_EQ(*a.max, 3);
    EXPECT_DOUBLE_EQ(*a.range, 2);
    EXPECT_DOUBLE_EQ(*a.std, 1);
    EXPECT_DOUBLE_EQ(*a.skew, 0);
    EXPECT_FALSE(a.kurtosis);
}

TEST(Aggregate, ConstantSeries) {
    const std::vector<double> x{5, 5, 5, 5};
    const auto a = aggregate(x);
    EXPECT_EQ(*a.std, 0.0);
    EXPECT_EQ(*a.skew, 0.0);
    EXPECT_EQ(*a.kurtosis, 0.0);
}

TEST(Aggregate, EmptyIsAllMissing) {
    const auto a = aggregate(std::vector<double>{});
    EXPECT_EQ(a.count, 0u);
    for (const auto& [name, v] : a.entries()) EXPECT_FALSE(v) << name;
}

TEST(Aggregate, SelectorMasksEntries) {
    const std::vector<double> x{1, 2, 3, 10};
    const auto a = aggregate(x, kMean | kMax);
    EXPECT_TRUE(a.mean && a.max);
    EXPECT_FALSE(a.min || a.std || a.kurtosis);
}

TEST(Aggregate, MatchesReferenceOnUniformDraws) {
    Rng rng(7);
    std::vector<double> x(1000);
    for (double& v : x) v = uniform01(rng);
    const auto a = aggregate(x);
    const auto r = reference_stats(x);
    EXPECT_NEAR(*a.mean, r.mean, 1e-12);
    EXPECT_NEAR(*a.median, r.median, 1e-12);
    EXPECT_NEAR(*a.std, r.std, 1e-12);
    EXPECT_NEAR(*a.q25, r.q25, 1e-12);
    EXPECT_NEAR(*a.q75, r.q75, 1e-12);
    EXPECT_NEAR(*a.skew, r.skew, 1e-12);
    EXPECT_NEAR(*a.kurtosis, r.kurtosis, 1e-12);
    EXPECT_EQ(*a.min, *std::min_element(x.begin(), x.end()));
    EXPECT_EQ(*a.max, *std::max_element(x.begin(), x.end()));
}

TEST(Aggregate, DuplicatedSampleKeepsLocationStats) {
    Rng rng(3);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> x(1 + uniform_index(rng, 40));
        for (double& v : x) v = standard_normal(rng);
        std::vector<double> xx = x;
        xx.insert(xx.end(), x.begin(), x.end());
        const auto a = aggregate(x), b = aggregate(xx);
        EXPECT_NEAR(*a.mean, *b.mean, 1e-12);
        EXPECT_NEAR(*a.median, *b.median, 1e-12);
        EXPECT_EQ(*a.min, *b.min);
        EXPECT_EQ(*a.max, *b.max);
        EXPECT_NEAR(*a.q25, *b.q25, 1e-12);
        EXPECT_NEAR(*a.q75, *b.q75, 1e-12);
    }
}

TEST(FeatureVectorTest, RejectsDuplicatesAndNonFinite) {
    FeatureVector fv("p", "q");
    fv.add("a", 1.0, Group::External);
    EXPECT_THROW(fv.add("a", 2.0, Group::External), Error);
    EXPECT_THROW(fv.add("b", std::nan(""), Group::External), Error);
    EXPECT_THROW(fv.get("zzz"), Error);
    FeatureVector other("p", "q");
    other.add("c", std::nullopt, Group::Physio);
    fv.concat(other);
    EXPECT_EQ(fv.size(), 2u);
    EXPECT_FALSE(fv.get("c"));
    EXPECT_THROW(fv.concat(other), Error);
}

TEST(VergenceTest, Examples) {
    auto s = valid_sample(0, {500, 500});
    s.left_pupil_pos = {100, 200};
    s.right_pupil_pos = {160, 200};
    s.left_dir = Vec3{0, 0, 1};
    s.right_dir = Vec3{0, 0, 1};
    auto v = vergence(s);
    EXPECT_DOUBLE_EQ(*v.pupil_distance_px, 60.0);
    EXPECT_DOUBLE_EQ(*v.angle_rad, 0.0);
    s.right_dir = Vec3{1, 0, 0};
    EXPECT_NEAR(*vergence(s).angle_rad, 3.141592653589793 / 2, 1e-12);
    s.left_dir.reset();
    v = vergence(s);
    EXPECT_FALSE(v.angle_rad);
    EXPECT_DOUBLE_EQ(*v.pupil_distance_px, 60.0);
    s.valid_right = false;
    EXPECT_FALSE(vergence(s).pupil_distance_px);
}

TEST(PupilBaseline, ConstantSignalCorrectsToZero) {
    gaze::SampleSeries s;
    for (int i = 0; i < 100; ++i) s.samples.push_back(valid_sample(i * 4000, {1, 1}, 3.2));
    const auto b = pupil_baseline(s);
    ASSERT_TRUE(b);
    EXPECT_DOUBLE_EQ(*b, 3.2);
    std::vector<MaybeReal> values(10, 3.2);
    for (const auto& v : pupil_baseline_correct(values, b)) EXPECT_DOUBLE_EQ(*v, 0.0);
    const std::vector<MaybeReal> one{3.5};
    EXPECT_DOUBLE_EQ(*pupil_baseline_correct(one, 3.0)[0], 0.5);
}

TEST(PupilBaseline, DefaultSpanAndMeanZeroOverIt) {
    gaze::SampleSeries s;
    for (int i = 0; i < 100; ++i) s.samples.push_back(valid_sample(i * 4000, {1, 1}, 3.0 + 0.01 * i));
    const auto b = pupil_baseline(s);
    // 50 ms at 250 Hz covers samples 0..12.
    double sum = 0;
    for (int i = 0; i < 13; ++i) sum += 3.0 + 0.01 * i;
    EXPECT_NEAR(*b, sum / 13, 1e-12);
    std::vector<MaybeReal> span;
    for (int i = 0; i < 13; ++i) span.push_back(3.0 + 0.01 * i);
    double m = 0;
    for (const auto& v : pupil_baseline_correct(span, b)) m += *v;
    EXPECT_NEAR(m / 13, 0.0, 1e-9);
}

TEST(PupilBaseline, NoValidSampleWarns) {
    gaze::SampleSeries s;
    for (int i = 0; i < 20; ++i) s.samples.push_back(attnkit::testing::invalid_sample(i * 4000));
    WarningCapture w;
    const auto b = pupil_baseline(s);
    EXPECT_FALSE(b);
    EXPECT_FALSE(w.messages().empty());
    const std::vector<MaybeReal> values{3.0, 3.1};
    for (const auto& v : pupil_baseline_correct(values, b)) EXPECT_FALSE(v);
}

TEST(ExtractFeatures, FixationSaccadeRatio) {
    const auto w = window_with({fixation(0, 200), saccade(200, 30, 50), fixation(230, 400), saccade(630, 30, -20)});
    const auto fv = extract_feature_vector(w, {});
    EXPECT_NEAR(*fv.get("fixation_saccade_ratio.min"), 200.0 / 30.0, 1e-9);
    EXPECT_NEAR(*fv.get("fixation_saccade_ratio.max"), 400.0 / 30.0, 1e-9);
    EXPECT_NEAR(*fv.get("fixation_saccade_ratio.mean"), 10.0, 1e-9);
}

TEST(ExtractFeatures, RegressionProportion) {
    const auto w = window_with({fixation(0, 100), saccade(100, 20, 50), fixation(120, 100), saccade(220, 20, -20),
                                fixation(240, 100), saccade(340, 20, 10), fixation(360, 100)});
    const auto fv = extract_feature_vector(w, {});
    EXPECT_NEAR(*fv.get("saccade_regression_proportion"), 1.0 / 3.0, 1e-12);
    EXPECT_DOUBLE_EQ(*fv.get("saccade_count"), 3.0);
}

TEST(ExtractFeatures, CountsMatchEvents) {
    std::vector<gaze::Event> ev;
    for (int i = 0; i < 18; ++i) ev.push_back(fixation(i * 300, 250, {100.0 + i, 200}));
    ev.push_back(blink(6000, 120));
    ev.push_back(blink(6500, 80));
    const auto fv = extract_feature_vector(window_with(ev), {});
    EXPECT_DOUBLE_EQ(*fv.get("fixation_count"), 18.0);
    EXPECT_DOUBLE_EQ(*fv.get("blink_count"), 2.0);
    EXPECT_DOUBLE_EQ(*fv.get("blink_duration.mean"), 100.0);
    EXPECT_FALSE(fv.has("fixation_count.mean"));
}

TEST(ExtractFeatures, NoSaccadesOrFixationsGiveMissing) {
    const auto fv = extract_feature_vector(window_with({fixation(0, 200)}), {});
    EXPECT_FALSE(fv.get("fixation_saccade_ratio.mean"));
    EXPECT_FALSE(fv.get("saccade_duration.mean"));
    EXPECT_FALSE(fv.get("saccade_regression_proportion"));
    EXPECT_DOUBLE_EQ(*fv.get("saccade_count"), 0.0);
    const auto empty = extract_feature_vector(window_with({}), {});
    EXPECT_FALSE(empty.get("fixation_dispersion_x"));
}

TEST(ExtractFeatures, DegreeFeaturesMissingWithoutGeometry) {
    auto s = saccade(200, 30, 50);
    s.saccade.amplitude_deg = 1.5;
    const auto w = window_with({fixation(0, 200), s, fixation(230, 200)});
    EXPECT_FALSE(extract_feature_vector(w, {}).get("saccade_amplitude.mean"));
    gaze::ScreenGeometry g;
    g.screen_mm = Vec2{531, 299};
    g.viewing_distance_mm = 650;
    EXPECT_DOUBLE_EQ(*extract_feature_vector(w, g).get("saccade_amplitude.mean"), 1.5);
}

TEST(ExtractFeatures, PupilFeaturesNeedABaseline) {
    const auto w = window_with({fixation(0, 200), fixation(300, 200)});
    EXPECT_FALSE(extract_feature_vector(w, {}).get("pupil_diameter.mean"));
    ExtractOptions opt;
    opt.pupil_baseline_mm = 2.5;
    EXPECT_DOUBLE_EQ(*extract_feature_vector(w, {}, opt).get("pupil_diameter.mean"), 0.5);
}

TEST(ExtractFeatures, RejectedWindowThrows) {
    auto w = window_with({});
    w.accepted = false;
    EXPECT_THROW(extract_feature_vector(w, {}), Error);
}

TEST(ExtractFeatures, TimeTranslationInvariant) {
    std::vector<gaze::Event> ev{fixation(0, 200, {100, 100}), saccade(200, 30, 50), fixation(230, 400, {150, 120}),
                                blink(700, 90)};
    const auto a = extract_feature_vector(window_with(ev), {});
    for (auto& e : ev) {
        e.start_us += 123'456'789;
        e.end_us += 123'456'789;
    }
    auto w = window_with(ev);
    w.start_us += 123'456'789;
    w.end_us += 123'456'789;
    const auto b = extract_feature_vector(w, {});
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        EXPECT_EQ(a.entries()[i].name, b.entries()[i].name);
        EXPECT_EQ(a.entries()[i].value, b.entries()[i].value) << a.entries()[i].name;
    }
}

TEST(ExtractFeatures, DispersionTranslationAndScale) {
    std::vector<Vec2> c{{100, 100}, {300, 150}, {220, 400}, {50, 260}};
    auto build = [&](Vec2 off, double k) {
        std::vector<gaze::Event> ev;
        for (std::size_t i = 0; i < c.size(); ++i)
            ev.push_back(fixation(static_cast<std::int64_t>(i) * 300, 250, c[i] * k + off));
        return extract_feature_vector(window_with(ev), {});
    };
    const auto base = build({0, 0}, 1.0);
    const auto moved = build({400, -90}, 1.0);
    const auto scaled = build({0, 0}, 2.5);
    for (const char* name : {"fixation_dispersion_x", "fixation_dispersion_y"}) {
        EXPECT_NEAR(*moved.get(name), *base.get(name), 1e-9);
        EXPECT_NEAR(*scaled.get(name), 2.5 * *base.get(name), 1e-9);
    }
}
