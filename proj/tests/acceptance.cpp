// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>

#include "attnkit/cli.hpp"
#include "attnkit/gaze.hpp"
#include "attnkit/handraise.hpp"
#include "attnkit/ml/metrics.hpp"
#include "attnkit/ml/pipeline.hpp"
#include "attnkit/physio.hpp"
#include "attnkit/random.hpp"
#include "attnkit/sequences.hpp"
#include "attnkit/synchrony.hpp"
#include "oracles.hpp"
#include "synth.hpp"

using namespace attnkit;
namespace t = attnkit::testing;

namespace {

// Collects the first few failure reasons for a criterion.
class Check {
public:
    void expect(bool ok, const std::string& what) {
        if (ok) return;
        if (failures_++ < 3) {
            if (!detail_.empty()) detail_ += "; ";
            detail_ += what;
        }
    }
    bool ok() const { return failures_ == 0; }
    std::string detail() const {
        return failures_ > 3 ? detail_ + " (+" + std::to_string(failures_ - 3) + " more)" : detail_;
    }

private:
    std::size_t failures_ = 0;
    std::string detail_;
};

std::string fmt(double v) {
    std::ostringstream s;
    s.precision(6);
    s << v;
    return s.str();
}

void metric_formulas(Check& c) {
    const double f1 = ml::f1_score(0.818, 0.709);
    c.expect(std::abs(f1 - 0.760) <= 0.001, "F1(0.818, 0.709) = " + fmt(f1));
    const double a = ml::above_chance(0.396, 0.243);
    c.expect(std::abs(a - 0.2021) <= 0.0001, "above_chance(0.396, 0.243) = " + fmt(a));
    const double b = ml::above_chance(0.267, 0.151);
    c.expect(std::abs(b - 0.1366) <= 0.0001, "above_chance(0.267, 0.151) = " + fmt(b));
}

void chance_convention(Check& c) {
    Rng rng(2024);
    for (double prevalence : {0.151, 0.393}) {
        const std::size_t n = 10000;
        std::vector<int> y(n, 0);
        std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(std::lround(prevalence * n)), 1);
        shuffle(std::span<int>(y), rng);
        std::vector<double> s(n);
        for (double& v : s) v = uniform01(rng);
        const auto r = ml::evaluate_scores(s, y);
        c.expect(r.auc_pr && std::abs(*r.auc_pr - prevalence) <= 0.02,
                 "AUC-PR " + fmt(r.auc_pr.value_or(NAN)) + " at prevalence " + fmt(prevalence));
    }
}

sequences::ProbeSequence random_seq(Rng& rng, std::size_t max_len) {
    sequences::ProbeSequence s;
    const std::size_t len = 1 + uniform_index(rng, max_len);
    for (std::size_t i = 0; i < len; ++i) s.states.push_back(uniform_index(rng, 4));
    return s;
}

void om_distance(Check& c) {
    Rng rng(71);
    const sequences::OmCosts unit;
    for (int i = 0; i < 200; ++i) {
        const auto a = random_seq(rng, 10), b = random_seq(rng, 10);
        const sequences::OmCosts costs = i % 2 ? unit : sequences::OmCosts{1.0, 2.0};
        const double got = sequences::om_distance(a, b, costs, 4), want = t::om_oracle(a, b, costs);
        c.expect(got == want, "pair " + std::to_string(i) + ": " + fmt(got) + " vs " + fmt(want));
    }
    for (int i = 0; i < 1000; ++i) {
        const auto a = random_seq(rng, 10), b = random_seq(rng, 10), x = random_seq(rng, 10);
        const double ab = sequences::om_distance(a, b, unit, 4);
        c.expect(ab == sequences::om_distance(b, a, unit, 4), "symmetry");
        c.expect((ab == 0.0) == (a.states == b.states), "identity");
        c.expect(sequences::om_distance(a, x, unit, 4) <= ab + sequences::om_distance(b, x, unit, 4), "triangle");
    }
}

void multimatch_and_kld(Check& c) {
    Rng rng(83);
    for (int i = 0; i < 50; ++i) {
        const auto sp = t::random_scanpath(rng, 2 + uniform_index(rng, 10));
        const auto r = synchrony::multimatch(sp, sp);
        c.expect(r.shape == 1.0 && r.direction == 1.0 && r.length == 1.0 && r.position == 1.0 && r.duration == 1.0,
                 "identical scanpaths below 1");
    }
    for (int i = 0; i < 300; ++i) {
        const auto a = t::random_scanpath(rng, 3), b = t::random_scanpath(rng, 3);
        const auto r = synchrony::multimatch(a, b);
        const auto o = t::multimatch_oracle(a, b);
        const double worst = std::max({std::abs(r.shape - o.shape), std::abs(r.direction - o.direction),
                                       std::abs(r.length - o.length), std::abs(r.position - o.position),
                                       std::abs(r.duration - o.duration)});
        c.expect(worst <= 1e-9, "pair " + std::to_string(i) + " differs by " + fmt(worst));
    }
    const synchrony::GridSpec grid{32, 18, {1920, 1080}};
    for (int i = 0; i < 20; ++i) {
        const auto p = synchrony::density_map(t::random_scanpath(rng, 6), grid, 60, synchrony::Weighting::Count);
        c.expect(synchrony::kl_divergence(p, p) <= 1e-9, "KLD(P,P) > 1e-9");
    }
    synchrony::DensityMap p, q;
    p.cols = q.cols = 2;
    p.rows = q.rows = 1;
    p.values = {0.5, 0.5};
    q.values = {0.25, 0.75};
    const double d = synchrony::kl_divergence(p, q, false);
    c.expect(std::abs(d - 0.1438) <= 1e-4, "D([0.5,0.5] || [0.25,0.75]) = " + fmt(d));
}

void handraise_postprocess(Check& c) {
    Rng rng(97);
    const handraise::PostprocessOptions o;
    for (int i = 0; i < 500; ++i) {
        const double fps = i % 2 ? 24.0 : 10.0;
        std::vector<double> p(50 + uniform_index(rng, 600));
        double level = uniform01(rng);
        for (double& v : p) {
            if (uniform01(rng) < 0.03) level = uniform01(rng);
            v = std::clamp(level + 0.05 * standard_normal(rng), 0.0, 1.0);
        }
        const auto got = handraise::postprocess(p, fps, 0, 0.0, o);
        const auto want = t::postprocess_oracle(p, fps, o);
        bool same = got.size() == want.size();
        for (std::size_t k = 0; same && k < got.size(); ++k)
            same = got[k].start_s == want[k].first && got[k].end_s == want[k].second;
        c.expect(same, "stream " + std::to_string(i));
    }
    // Raises over [0, 2] s and [5, 7] s are three seconds apart and merge.
    std::vector<double> two(240, 0.1);
    std::fill(two.begin(), two.begin() + 48, 0.9);
    std::fill(two.begin() + 120, two.begin() + 168, 0.9);
    const auto merged = handraise::postprocess(two, 24.0);
    c.expect(merged.size() == 1 && merged[0].start_s == 0.0 && merged[0].end_s == 7.0, "[0,2]+[5,7] not merged");
    std::vector<double> brief(100, 0.0);
    std::fill(brief.begin() + 10, brief.begin() + 18, 0.9);
    c.expect(handraise::postprocess(brief, 10.0).empty(), "0.8 s raise kept");
}

void gaze_events(Check& c) {
    std::size_t overlong = 0;
    for (std::uint64_t seed = 1; seed <= 200; ++seed) {
        const auto blocks = t::random_trace_blocks(seed, 2 + seed % 5);
        const auto events = gaze::detect_events(t::build_trace(blocks));
        const auto got = t::as_expected(events);
        const auto want = t::stepwise_oracle(blocks);
        bool same = got.size() == want.size();
        for (std::size_t i = 0; same && i < got.size(); ++i)
            same = got[i].kind == want[i].kind && got[i].start_us == want[i].start_us && got[i].end_us == want[i].end_us &&
                   std::abs(got[i].length_px - want[i].length_px) <= 1e-9;
        c.expect(same, "seed " + std::to_string(seed));
        if (!same) continue;
        for (std::size_t i = 0; i < events.size(); ++i) {
            const bool long_blink = want[i].kind == gaze::EventKind::Blink && want[i].end_us - want[i].start_us > 500'000;
            overlong += long_blink;
            c.expect(events[i].overlong() == long_blink, "overlong flag, seed " + std::to_string(seed));
        }
    }
    c.expect(overlong > 0, "no overlong blink generated");
}

void end_to_end(Check& c) {
    for (double d : {1.5, 0.0}) {
        t::TwoClassSpec spec;
        spec.persons = 60;
        spec.windows = 15;
        spec.prevalence = 0.25;
        spec.d = d;
        const auto data = t::two_class_dataset(spec, 7);
        const auto folds = ml::make_folds(data.person_ids, {}, 7);
        const auto cv = ml::cross_validate(data, folds, ml::PipelineSpec{}, 7);
        const double prevalence = cv.pooled.positive.prevalence;
        const double ap = cv.pooled.auc_pr.value_or(NAN);
        if (d > 0) c.expect(ap >= prevalence + 0.15, "d=1.5: AUC-PR " + fmt(ap) + ", prevalence " + fmt(prevalence));
        else c.expect(std::abs(ap - prevalence) <= 0.03, "d=0: AUC-PR " + fmt(ap) + ", prevalence " + fmt(prevalence));
    }
}

void cluster_recovery(Check& c) {
    Rng rng(113);
    std::vector<sequences::ProbeSequence> seqs;
    std::vector<int> truth;
    for (int g = 0; g < 2; ++g)
        for (int i = 0; i < 20; ++i) {
            sequences::ProbeSequence s;
            for (int k = 0; k < 15; ++k) {
                // Each population mostly stays in its own state; the rest is uniform noise.
                const std::size_t own = 2 * static_cast<std::size_t>(g);
                s.states.push_back(uniform01(rng) < 0.8 ? own : uniform_index(rng, 4));
            }
            seqs.push_back(s);
            truth.push_back(g);
        }
    const auto d = sequences::distance_matrix(seqs, {}, 4);
    const auto labels = sequences::cut(sequences::ward_cluster(d), 2);
    std::map<int, std::set<int>> mapping;
    for (std::size_t i = 0; i < labels.size(); ++i) mapping[truth[i]].insert(labels[i]);
    c.expect(mapping[0].size() == 1 && mapping[1].size() == 1 && *mapping[0].begin() != *mapping[1].begin(),
             "planted populations not recovered");
    const double asw = sequences::diagnostics(d, labels).average_silhouette_width;
    c.expect(asw > 0.5, "ASW " + fmt(asw));

    auto in = [](double v, double lo, double hi) { return v >= lo && v <= hi; };
    for (int i = 0; i < 100; ++i) {
        std::vector<sequences::ProbeSequence> r;
        const std::size_t n = 5 + uniform_index(rng, 20);
        for (std::size_t k = 0; k < n; ++k) r.push_back(random_seq(rng, 12));
        const auto rd = sequences::distance_matrix(r, {}, 4);
        const std::size_t k = 2 + uniform_index(rng, std::min<std::size_t>(4, n - 1));
        std::vector<int> lab(n);
        for (std::size_t j = 0; j < n; ++j) lab[j] = static_cast<int>(j < k ? j : uniform_index(rng, k)) + 1;
        const auto diag = sequences::diagnostics(rd, lab);
        c.expect(in(diag.average_silhouette_width, -1, 1) && in(diag.huberts_c, 0, 1) && in(diag.point_biserial, -1, 1),
                 "diagnostics out of range, clustering " + std::to_string(i));
    }
}

void physio_signals(Check& c) {
    const t::ScrBump b;
    const auto s = t::scr_bump_series(b);
    const auto parts = physio::decompose_eda(s);
    for (std::size_t i = 0; i < parts.cleaned.size(); ++i)
        c.expect(parts.tonic[i] + parts.phasic[i] == parts.cleaned[i], "tonic + phasic != cleaned at " + std::to_string(i));

    double mean = 0;
    for (double v : s.values) mean += v;
    mean /= static_cast<double>(s.values.size());
    double ss = 0;
    for (double v : s.values) ss += (v - mean) * (v - mean);
    const double a = b.amplitude / std::sqrt(ss / static_cast<double>(s.values.size() - 1));
    const double one = 1.0 / b.rate_hz;
    const auto peaks = physio::scr_peaks(parts.phasic, b.rate_hz, 0);
    c.expect(peaks.size() == 1, std::to_string(peaks.size()) + " SCR peaks");
    if (peaks.size() == 1) {
        c.expect(std::abs(peaks[0].amplitude - a) <= 0.05 * a, "amplitude " + fmt(peaks[0].amplitude) + " vs " + fmt(a));
        c.expect(std::abs(peaks[0].rise_time_s - b.rise_s) <= one, "rise " + fmt(peaks[0].rise_time_s));
        const double recovery = one + b.tau_s * std::log(2.0);
        c.expect(peaks[0].recovery_time_s && std::abs(*peaks[0].recovery_time_s - recovery) <= one,
                 "recovery " + fmt(peaks[0].recovery_time_s.value_or(NAN)));
    }

    const auto bvp = physio::bvp_features(t::sine_series(1.0, 30.0));
    std::size_t known = 0;
    for (const auto& r : bvp.rate_bpm)
        if (r) {
            ++known;
            c.expect(std::abs(*r - 60.0) <= 1.0, "rate " + fmt(*r) + " bpm");
        }
    c.expect(known > 0, "no BVP rate");
}

void cli_determinism(Check& c) {
    t::TempDir dir;
    t::TwoClassSpec spec;
    spec.persons = 12;
    spec.windows = 10;
    const auto d = t::two_class_dataset(spec, 11);
    t::write_text(dir / "features.csv", t::dataset_features_csv(d));
    t::write_text(dir / "labels.csv", t::dataset_labels_csv(d));
    std::map<std::string, std::string> first;
    for (int pass = 0; pass < 2; ++pass) {
        for (std::string cmd : {"train", "evaluate"}) {
            std::ostringstream out, err;
            const int code = cli::dispatch({cmd, "--features", (dir / "features.csv").string(), "--labels",
                                            (dir / "labels.csv").string(), "--seed", "5", "--out-dir",
                                            (dir / "out").string()},
                                           out, err);
            c.expect(code == 0, cmd + " exited " + std::to_string(code) + ": " + err.str());
        }
        for (std::string f : {"metrics.json", "model.json"}) {
            const std::string bytes = t::read_text(dir / ("out/" + f));
            if (pass == 0) first[f] = bytes;
            else c.expect(bytes == first[f], f + " differs between runs");
        }
    }
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Check&)>>> criteria{
        {"metric formulas", metric_formulas},
        {"chance convention", chance_convention},
        {"optimal matching", om_distance},
        {"multimatch and kld", multimatch_and_kld},
        {"hand-raise post-processing", handraise_postprocess},
        {"event detection", gaze_events},
        {"end-to-end synthetic detection", end_to_end},
        {"clustering recovery", cluster_recovery},
        {"physio", physio_signals},
        {"determinism", cli_determinism},
    };
    int failed = 0;
    for (const auto& [name, run] : criteria) {
        Check c;
        const auto start = std::chrono::steady_clock::now();
        try {
            run(c);
        } catch (const std::exception& e) {
            c.expect(false, std::string("exception: ") + e.what());
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("%s %s (%.2f s)%s%s\n", c.ok() ? "PASS" : "FAIL", name.c_str(), secs, c.ok() ? "" : ": ",
                    c.detail().c_str());
        failed += !c.ok();
    }
    return failed == 0 ? 0 : 1;
}
