#include "attnkit/physio.hpp"

#include <algorithm>
#include <cmath>

#include "attnkit/csv.hpp"
#include "attnkit/stats.hpp"

namespace attnkit::physio {

namespace {

double snap(double v) { return std::ldexp(std::nearbyint(std::ldexp(v, 40)), -40); }

std::vector<double> median3(const std::vector<double>& x) {
    std::vector<double> out = x;
    for (std::size_t i = 1; i + 1 < x.size(); ++i) {
        double a = x[i - 1], b = x[i], c = x[i + 1];
        out[i] = std::max(std::min(a, b), std::min(std::max(a, b), c));
    }
    return out;
}

// Centred window of 2*half+1 samples, truncated at the edges.
std::vector<double> moving_average(const std::vector<double>& x, std::size_t half) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(x.size() - 1, i + half);
        double s = 0.0;
        for (std::size_t k = lo; k <= hi; ++k) s += x[k];
        out[i] = s / static_cast<double>(hi - lo + 1);
    }
    return out;
}

// Same window length everywhere: near the ends the window slides inward instead of
// shrinking, so a periodic signal is never averaged over a partial cycle.
std::vector<double> moving_average_full(const std::vector<double>& x, std::size_t half) {
    const std::size_t width = std::min(x.size(), 2 * half + 1);
    std::vector<double> prefix(x.size() + 1, 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) prefix[i + 1] = prefix[i] + x[i];
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t lo = std::min(i >= half ? i - half : 0, x.size() - width);
        out[i] = (prefix[lo + width] - prefix[lo]) / static_cast<double>(width);
    }
    return out;
}

std::vector<double> moving_minimum(const std::vector<double>& x, std::size_t half) {
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const std::size_t lo = i >= half ? i - half : 0;
        const std::size_t hi = std::min(x.size() - 1, i + half);
        out[i] = *std::min_element(x.begin() + static_cast<std::ptrdiff_t>(lo),
                                   x.begin() + static_cast<std::ptrdiff_t>(hi) + 1);
    }
    return out;
}

std::size_t half_window(double rate_hz, double seconds) {
    return static_cast<std::size_t>(std::max(1.0, std::round(rate_hz * seconds / 2.0)));
}

}  // namespace

EdaComponents decompose_eda(const PhysioSeries& eda) {
    if (eda.values.size() < 8) throw Error("decompose_eda: need at least 8 samples");
    if (!(eda.rate_hz > 0.0)) throw Error("decompose_eda: rate must be positive");
    for (double v : eda.values)
        if (!std::isfinite(v)) throw Error("decompose_eda: non-finite sample");

    EdaComponents c;
    const std::vector<double> filtered = median3(eda.values);
    if (stats::stddev(filtered) == 0.0) {
        warn("decompose_eda: constant signal for '" + eda.person_id + "'; cleaned set to zero");
        c.cleaned.assign(filtered.size(), 0.0);
    } else {
        c.cleaned = stats::zscore(filtered);
        for (double& v : c.cleaned) v = snap(v);
    }
    const std::size_t half = half_window(eda.rate_hz, 4.0);
    c.tonic = moving_average(moving_minimum(c.cleaned, half), half);
    c.phasic.resize(c.cleaned.size());
    for (std::size_t i = 0; i < c.cleaned.size(); ++i) {
        c.tonic[i] = snap(c.tonic[i]);
        c.phasic[i] = c.cleaned[i] - c.tonic[i];
    }
    return c;
}

std::vector<ScrPeak> scr_peaks(const std::vector<double>& p, double rate_hz, std::int64_t t0_us, double min_amplitude) {
    std::vector<ScrPeak> peaks;
    auto t_us = [&](std::size_t i) {
        return t0_us + static_cast<std::int64_t>(std::llround(static_cast<double>(i) * 1e6 / rate_hz));
    };
    for (std::size_t i = 1; i + 1 < p.size(); ++i) {
        if (!(p[i] > p[i - 1] && p[i] >= p[i + 1])) continue;
        std::size_t trough = i;
        while (trough > 0 && p[trough - 1] < p[trough]) --trough;
        const double amplitude = p[i] - p[trough];
        if (amplitude < min_amplitude) continue;
        ScrPeak pk;
        pk.onset_us = t_us(trough);
        pk.peak_us = t_us(i);
        pk.amplitude = amplitude;
        pk.rise_time_s = static_cast<double>(i - trough) / rate_hz;
        const double half_level = p[i] - 0.5 * amplitude;
        for (std::size_t k = i + 1; k < p.size(); ++k) {
            if (p[k] <= half_level) {
                pk.recovery_time_s = static_cast<double>(k - i) / rate_hz;
                break;
            }
        }
        peaks.push_back(pk);
    }
    return peaks;
}

BvpResult bvp_features(const PhysioSeries& bvp) {
    if (!(bvp.rate_hz > 0.0)) throw Error("bvp_features: rate must be positive");
    if (static_cast<double>(bvp.values.size()) < 2.0 * bvp.rate_hz) throw Error("bvp_features: need at least 2 s of data");
    BvpResult r;
    const std::vector<double> z = stats::zscore(bvp.values);
    const std::vector<double> trend = moving_average_full(z, half_window(bvp.rate_hz, 1.0));
    r.cleaned.resize(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) r.cleaned[i] = z[i] - trend[i];

    const auto& x = r.cleaned;
    std::vector<std::size_t> candidates;
    for (std::size_t i = 1; i + 1 < x.size(); ++i)
        if (x[i] > 0.0 && x[i] > x[i - 1] && x[i] >= x[i + 1]) candidates.push_back(i);
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) { return x[a] > x[b]; });
    const double min_gap = 0.33 * bvp.rate_hz;
    for (std::size_t c : candidates) {
        const bool clear = std::all_of(r.peak_indices.begin(), r.peak_indices.end(), [&](std::size_t a) {
            return std::abs(static_cast<double>(a) - static_cast<double>(c)) >= min_gap;
        });
        if (clear) r.peak_indices.push_back(c);
    }
    std::sort(r.peak_indices.begin(), r.peak_indices.end());
    for (std::size_t i : r.peak_indices) r.peak_times_us.push_back(bvp.time_us(i));

    r.rate_bpm.assign(x.size(), std::nullopt);
    if (r.peak_indices.size() < 2) return r;
    for (std::size_t k = 0; k + 1 < r.peak_indices.size(); ++k) {
        const double ibi_s = static_cast<double>(r.peak_times_us[k + 1] - r.peak_times_us[k]) / 1e6;
        for (std::size_t i = r.peak_indices[k]; i < r.peak_indices[k + 1]; ++i) r.rate_bpm[i] = 60.0 / ibi_s;
    }
    const MaybeReal last = r.rate_bpm[r.peak_indices.back() - 1];
    for (std::size_t i = r.peak_indices.back(); i < x.size(); ++i) r.rate_bpm[i] = last;
    return r;
}

PhysioAnalysis analyze(const PhysioRecording& rec) {
    PhysioAnalysis a;
    if (rec.eda) {
        a.eda = rec.eda;
        a.eda_components = decompose_eda(*rec.eda);
        a.scr = scr_peaks(a.eda_components->phasic, rec.eda->rate_hz, rec.eda->t0_us);
    }
    if (rec.bvp) {
        a.bvp = rec.bvp;
        a.bvp_result = bvp_features(*rec.bvp);
    }
    return a;
}

features::FeatureVector window_features(const PhysioAnalysis& a, const std::string& person_id,
                                        const std::string& probe_id, std::int64_t start_us, std::int64_t end_us) {
    using features::aggregate;
    using features::AggStats;
    using features::Group;
    features::FeatureVector fv(person_id, probe_id);

    auto slice = [&](const PhysioSeries& s, const std::vector<double>& v) {
        std::vector<double> out;
        for (std::size_t i = 0; i < v.size(); ++i) {
            const std::int64_t t = s.time_us(i);
            if (t >= start_us && t < end_us) out.push_back(v[i]);
        }
        return out;
    };

    if (a.eda && a.eda_components) {
        fv.add_stats("eda.cleaned", aggregate(slice(*a.eda, a.eda_components->cleaned)), Group::Physio);
        fv.add_stats("eda.tonic", aggregate(slice(*a.eda, a.eda_components->tonic)), Group::Physio);
        fv.add_stats("eda.phasic", aggregate(slice(*a.eda, a.eda_components->phasic)), Group::Physio);
        std::vector<double> amp, rise, rec;
        for (const ScrPeak& p : a.scr) {
            if (p.peak_us < start_us || p.peak_us >= end_us) continue;
            amp.push_back(p.amplitude);
            rise.push_back(p.rise_time_s);
            if (p.recovery_time_s) rec.push_back(*p.recovery_time_s);
        }
        fv.add("eda.scr_count", static_cast<double>(amp.size()), Group::Physio);
        fv.add_stats("eda.scr_amplitude", aggregate(amp), Group::Physio);
        fv.add_stats("eda.scr_rise_time", aggregate(rise), Group::Physio);
        fv.add_stats("eda.scr_recovery_time", aggregate(rec), Group::Physio);
    } else {
        for (const char* prefix : {"eda.cleaned", "eda.tonic", "eda.phasic"}) fv.add_stats(prefix, AggStats{}, Group::Physio);
        fv.add("eda.scr_count", std::nullopt, Group::Physio);
        for (const char* prefix : {"eda.scr_amplitude", "eda.scr_rise_time", "eda.scr_recovery_time"})
            fv.add_stats(prefix, AggStats{}, Group::Physio);
    }

    if (a.bvp && a.bvp_result) {
        fv.add_stats("bvp.cleaned", aggregate(slice(*a.bvp, a.bvp_result->cleaned)), Group::Physio);
        std::vector<double> rate;
        for (std::size_t i = 0; i < a.bvp_result->rate_bpm.size(); ++i) {
            const std::int64_t t = a.bvp->time_us(i);
            if (t >= start_us && t < end_us && a.bvp_result->rate_bpm[i]) rate.push_back(*a.bvp_result->rate_bpm[i]);
        }
        fv.add_stats("bvp.rate", aggregate(rate), Group::Physio);
        const auto beats = std::count_if(a.bvp_result->peak_times_us.begin(), a.bvp_result->peak_times_us.end(),
                                         [&](std::int64_t t) { return t >= start_us && t < end_us; });
        fv.add("bvp.beat_count", static_cast<double>(beats), Group::Physio);
    } else {
        fv.add_stats("bvp.cleaned", AggStats{}, Group::Physio);
        fv.add_stats("bvp.rate", AggStats{}, Group::Physio);
        fv.add("bvp.beat_count", std::nullopt, Group::Physio);
    }
    return fv;
}

std::map<std::string, PhysioRecording> load_physio(std::istream& in, const std::string& source) {
    const csv::Table t = csv::Table::read(in, source);
    const std::size_t c_person = t.require_column("person_id");
    const std::size_t c_channel = t.require_column("channel");
    const std::size_t c_t = t.require_column("t_us");
    const std::size_t c_v = t.require_column("value");

    struct Raw {
        std::vector<std::int64_t> t;
        std::vector<double> v;
    };
    std::map<std::pair<std::string, std::string>, Raw> raw;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto& row = t.row(r);
        if (row.size() != t.header().size()) throw IngestError(source + ": wrong field count", t.line_number(r));
        const auto ts = csv::parse_int(row[c_t]);
        const auto v = csv::parse_real(row[c_v]);
        std::string ch = row[c_channel];
        std::transform(ch.begin(), ch.end(), ch.begin(), [](unsigned char c) { return std::toupper(c); });
        if (!ts || !v || (ch != "EDA" && ch != "BVP")) throw IngestError(source + ": malformed row", t.line_number(r));
        Raw& dst = raw[{row[c_person], ch}];
        if (!dst.t.empty() && *ts <= dst.t.back())
            throw IngestError(source + ": timestamps not strictly increasing", t.line_number(r));
        dst.t.push_back(*ts);
        dst.v.push_back(*v);
    }

    std::map<std::string, PhysioRecording> out;
    for (auto& [key, r] : raw) {
        PhysioSeries s;
        s.person_id = key.first;
        s.channel = key.second == "EDA" ? Channel::EDA : Channel::BVP;
        s.t0_us = r.t.front();
        s.values = std::move(r.v);
        if (r.t.size() >= 2) {
            std::vector<double> steps;
            for (std::size_t i = 1; i < r.t.size(); ++i) steps.push_back(static_cast<double>(r.t[i] - r.t[i - 1]));
            s.rate_hz = 1e6 / stats::median(steps);
        } else {
            s.rate_hz = s.channel == Channel::EDA ? kDefaultEdaRateHz : kDefaultBvpRateHz;
        }
        if (s.channel == Channel::EDA) out[key.first].eda = std::move(s);
        else out[key.first].bvp = std::move(s);
    }
    return out;
}

}  // namespace attnkit::physio
