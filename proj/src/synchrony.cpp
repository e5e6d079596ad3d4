#include "attnkit/synchrony.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

#include "attnkit/csv.hpp"
#include "attnkit/stats.hpp"

namespace attnkit::synchrony {

Scanpath Scanpath::from_events(const std::vector<gaze::Event>& events, Vec2 screen_px) {
    Scanpath sp;
    sp.screen_px = screen_px;
    for (const auto& e : events) {
        if (e.kind != gaze::EventKind::Fixation || e.duration_ms() <= 0.0) continue;
        sp.fixations.push_back({e.fixation.centroid, e.duration_ms()});
    }
    return sp;
}

double default_sigma_px(const gaze::ScreenGeometry& geometry) {
    if (auto ppd = geometry.px_per_degree()) return *ppd;
    return 0.02 * geometry.screen_px.x;
}

// ---------------------------------------------------------------------------
// Density maps
// ---------------------------------------------------------------------------

namespace {

void check_density_inputs(const Scanpath& sp, const GridSpec& grid, double sigma) {
    if (sp.fixations.empty()) throw Error("density_map: no fixations");
    if (!(sigma > 0.0)) throw Error("density_map: sigma must be positive");
    if (grid.cols == 0 || grid.rows == 0) throw Error("density_map: empty grid");
}

double cell_value(const Scanpath& sp, Vec2 centre, double sigma, Weighting weighting) {
    const double norm = 1.0 / (2.0 * std::numbers::pi * sigma * sigma);
    const double inv2s2 = 1.0 / (2.0 * sigma * sigma);
    double v = 0.0;
    for (const Fixation& f : sp.fixations) {
        const double dx = centre.x - f.pos.x;
        const double dy = centre.y - f.pos.y;
        const double w = weighting == Weighting::Duration ? f.duration_ms : 1.0;
        v += w * norm * std::exp(-(dx * dx + dy * dy) * inv2s2);
    }
    return v;
}

DensityMap empty_map(const GridSpec& grid, double sigma) {
    DensityMap m;
    m.cols = grid.cols;
    m.rows = grid.rows;
    m.cell_size_px = {grid.screen_px.x / static_cast<double>(grid.cols),
                      grid.screen_px.y / static_cast<double>(grid.rows)};
    m.sigma_px = sigma;
    m.values.assign(grid.cols * grid.rows, 0.0);
    return m;
}

Vec2 cell_centre(const DensityMap& m, std::size_t r, std::size_t c) {
    return {(static_cast<double>(c) + 0.5) * m.cell_size_px.x, (static_cast<double>(r) + 0.5) * m.cell_size_px.y};
}

void normalize(DensityMap& m) {
    double sum = 0.0;
    for (double v : m.values) sum += v;
    if (!(sum > 0.0)) {
        std::fill(m.values.begin(), m.values.end(), 1.0);
        sum = static_cast<double>(m.values.size());
    }
    double total = 0.0;
    for (double& v : m.values) {
        v = v / sum + kDensityEpsilon;
        total += v;
    }
    for (double& v : m.values) v /= total;
}

}  // namespace

DensityMap density_map(const Scanpath& sp, const GridSpec& grid, double sigma, Weighting weighting) {
    check_density_inputs(sp, grid, sigma);
    DensityMap m = empty_map(grid, sigma);
    const auto rows = static_cast<std::ptrdiff_t>(m.rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c)
            m.values[static_cast<std::size_t>(r) * m.cols + c] =
                cell_value(sp, cell_centre(m, static_cast<std::size_t>(r), c), sigma, weighting);
    normalize(m);
    return m;
}

DensityMap density_map_serial(const Scanpath& sp, const GridSpec& grid, double sigma, Weighting weighting) {
    check_density_inputs(sp, grid, sigma);
    DensityMap m = empty_map(grid, sigma);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c) m.values[r * m.cols + c] = cell_value(sp, cell_centre(m, r, c), sigma, weighting);
    normalize(m);
    return m;
}

double kl_divergence(const DensityMap& p, const DensityMap& q, bool symmetrize) {
    if (p.rows != q.rows || p.cols != q.cols || p.values.size() != q.values.size())
        throw Error("kl_divergence: grid shape mismatch");
    auto directed = [](const DensityMap& a, const DensityMap& b) {
        double d = 0.0;
        for (std::size_t i = 0; i < a.values.size(); ++i)
            if (a.values[i] > 0.0) d += a.values[i] * std::log(a.values[i] / b.values[i]);
        return d;
    };
    const double pq = directed(p, q);
    if (!symmetrize) return pq;
    return 0.5 * (pq + directed(q, p));
}

// ---------------------------------------------------------------------------
// MultiMatch
// ---------------------------------------------------------------------------

namespace {

std::vector<Vec2> saccade_vectors(const Scanpath& sp) {
    std::vector<Vec2> v;
    for (std::size_t i = 0; i + 1 < sp.fixations.size(); ++i) v.push_back(sp.fixations[i + 1].pos - sp.fixations[i].pos);
    return v;
}

void require_length(const Scanpath& sp) {
    if (sp.fixations.size() < 2) throw Error("multimatch: scanpath too short");
}

double angle_between(Vec2 u, Vec2 v) {
    double d = std::abs(std::atan2(u.y, u.x) - std::atan2(v.y, v.x));
    if (d > std::numbers::pi) d = 2.0 * std::numbers::pi - d;
    return d;
}

}  // namespace

std::vector<AlignedPair> align_saccades(const Scanpath& a, const Scanpath& b) {
    require_length(a);
    require_length(b);
    const auto u = saccade_vectors(a);
    const auto v = saccade_vectors(b);
    const std::size_t n = u.size(), m = v.size();
    std::vector<double> acc(n * m, 0.0);
    auto at = [&](std::size_t i, std::size_t j) -> double& { return acc[i * m + j]; };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            const double cost = (u[i] - v[j]).norm();
            if (i == 0 && j == 0) {
                at(i, j) = cost;
            } else if (i == 0) {
                at(i, j) = cost + at(i, j - 1);
            } else if (j == 0) {
                at(i, j) = cost + at(i - 1, j);
            } else {
                at(i, j) = cost + std::min({at(i - 1, j), at(i, j - 1), at(i - 1, j - 1)});
            }
        }
    }
    // Distance from the normalized diagonal; symmetric under swapping the scanpaths.
    auto off_diagonal = [&](std::size_t i, std::size_t j) {
        return std::abs(static_cast<double>(i) * static_cast<double>(m - 1) -
                        static_cast<double>(j) * static_cast<double>(n - 1));
    };
    std::vector<AlignedPair> path;
    std::size_t i = n - 1, j = m - 1;
    path.push_back({i, j});
    while (i > 0 || j > 0) {
        if (i == 0) {
            --j;
        } else if (j == 0) {
            --i;
        } else {
            const double diag = at(i - 1, j - 1), up = at(i - 1, j), left = at(i, j - 1);
            if (diag <= up && diag <= left) {
                --i;
                --j;
            } else if (up < left) {
                --i;
            } else if (left < up) {
                --j;
            } else if (off_diagonal(i, j - 1) < off_diagonal(i - 1, j)) {
                --j;
            } else {
                --i;
            }
        }
        path.push_back({i, j});
    }
    std::reverse(path.begin(), path.end());
    return path;
}

MultiMatchResult score_alignment(const Scanpath& a, const Scanpath& b, const std::vector<AlignedPair>& path) {
    require_length(a);
    require_length(b);
    const auto u = saccade_vectors(a);
    const auto v = saccade_vectors(b);
    const double diag = a.screen_px.norm();
    double shape = 0.0, direction = 0.0, length = 0.0, position = 0.0, duration = 0.0;
    for (const AlignedPair& p : path) {
        shape += (u[p.a] - v[p.b]).norm() / (2.0 * diag);
        direction += angle_between(u[p.a], v[p.b]) / std::numbers::pi;
        length += std::abs(u[p.a].norm() - v[p.b].norm()) / (2.0 * diag);
        const Fixation& fa = a.fixations[p.a];
        const Fixation& fb = b.fixations[p.b];
        position += distance(fa.pos, fb.pos) / diag;
        const double longest = std::max(fa.duration_ms, fb.duration_ms);
        duration += longest > 0.0 ? std::abs(fa.duration_ms - fb.duration_ms) / longest : 0.0;
    }
    const double k = static_cast<double>(path.size());
    auto sim = [k](double dissimilarity) { return std::clamp(1.0 - dissimilarity / k, 0.0, 1.0); };
    MultiMatchResult r;
    r.shape = sim(shape);
    r.direction = sim(direction);
    r.length = sim(length);
    r.position = sim(position);
    r.duration = sim(duration);
    r.overall = (r.shape + r.direction + r.length + r.position + r.duration) / 5.0;
    return r;
}

MultiMatchResult multimatch(const Scanpath& a, const Scanpath& b) { return score_alignment(a, b, align_saccades(a, b)); }

// ---------------------------------------------------------------------------
// ISC
// ---------------------------------------------------------------------------

GazeTrace resample_trace(const gaze::SampleSeries& series, std::int64_t t0_us, std::int64_t period_us,
                         std::size_t frames) {
    if (period_us <= 0) throw Error("resample_trace: period must be positive");
    GazeTrace tr;
    tr.t0_us = t0_us;
    tr.period_us = period_us;
    std::vector<double> sx(frames, 0.0), sy(frames, 0.0), sp(frames, 0.0);
    std::vector<std::size_t> nxy(frames, 0), np(frames, 0);
    for (const auto& s : series.samples) {
        if (s.t_us < t0_us) continue;
        const auto k = static_cast<std::size_t>((s.t_us - t0_us) / period_us);
        if (k >= frames) break;
        if (auto p = s.point_of_regard()) {
            sx[k] += p->x;
            sy[k] += p->y;
            ++nxy[k];
        }
        if (auto d = s.pupil_mm()) {
            sp[k] += *d;
            ++np[k];
        }
    }
    const double nan = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t k = 0; k < frames; ++k) {
        tr.x.push_back(nxy[k] ? sx[k] / static_cast<double>(nxy[k]) : nan);
        tr.y.push_back(nxy[k] ? sy[k] / static_cast<double>(nxy[k]) : nan);
        tr.pupil.push_back(np[k] ? sp[k] / static_cast<double>(np[k]) : nan);
    }
    return tr;
}

MaybeReal isc_pair(const GazeTrace& a, const GazeTrace& b) {
    if (a.period_us != b.period_us || a.period_us <= 0) throw Error("isc_pair: traces use different frame clocks");
    if ((b.t0_us - a.t0_us) % a.period_us != 0) throw Error("isc_pair: traces are not aligned to a common clock");
    const std::int64_t shift = (b.t0_us - a.t0_us) / a.period_us;  // frame k of a is frame k - shift of b
    const std::int64_t lo = std::max<std::int64_t>(0, shift);
    const std::int64_t hi = std::min<std::int64_t>(static_cast<std::int64_t>(a.frames()),
                                                   shift + static_cast<std::int64_t>(b.frames()));
    if (hi - lo < 2) throw Error("isc_pair: overlapping span shorter than 2 frames");

    auto channel = [&](const std::vector<double>& ca, const std::vector<double>& cb) -> MaybeReal {
        std::vector<double> xa, xb;
        for (std::int64_t k = lo; k < hi; ++k) {
            const double va = ca[static_cast<std::size_t>(k)];
            const double vb = cb[static_cast<std::size_t>(k - shift)];
            if (std::isfinite(va) && std::isfinite(vb)) {
                xa.push_back(va);
                xb.push_back(vb);
            }
        }
        return stats::pearson(xa, xb);
    };
    double sum = 0.0;
    int used = 0;
    for (const MaybeReal& r : {channel(a.x, b.x), channel(a.y, b.y), channel(a.pupil, b.pupil)}) {
        if (r) {
            sum += *r;
            ++used;
        }
    }
    if (used == 0) return std::nullopt;
    return sum / used;
}

// ---------------------------------------------------------------------------
// Group scoring
// ---------------------------------------------------------------------------

const char* to_string(Measure m) {
    switch (m) {
        case Measure::KLD: return "KLD";
        case Measure::MMOverall: return "MM_overall";
        case Measure::MMShape: return "MM_shape";
        case Measure::MMDirection: return "MM_direction";
        case Measure::MMLength: return "MM_length";
        case Measure::MMPosition: return "MM_position";
        case Measure::MMDuration: return "MM_duration";
        case Measure::ISC: return "ISC";
    }
    return "?";
}

std::optional<Measure> measure_from_string(const std::string& s) {
    for (Measure m : {Measure::KLD, Measure::MMOverall, Measure::MMShape, Measure::MMDirection, Measure::MMLength,
                      Measure::MMPosition, Measure::MMDuration, Measure::ISC})
        if (s == to_string(m)) return m;
    return std::nullopt;
}

std::vector<Measure> measures_from_flag(const std::string& flag) {
    if (flag == "kld" || flag == "KLD") return {Measure::KLD};
    if (flag == "isc" || flag == "ISC") return {Measure::ISC};
    if (flag == "multimatch" || flag == "mm")
        return {Measure::MMOverall, Measure::MMShape,    Measure::MMDirection,
                Measure::MMLength,  Measure::MMPosition, Measure::MMDuration};
    if (auto m = measure_from_string(flag)) return {*m};
    throw Error("unknown synchrony measure '" + flag + "'");
}

namespace {

struct PairValue {
    MaybeReal ab;
    MaybeReal ba;
};

struct PairIndex {
    std::size_t i;
    std::size_t j;
};

std::vector<PairIndex> peer_pairs(const std::vector<Subject>& subjects) {
    std::vector<PairIndex> pairs;
    for (std::size_t i = 0; i < subjects.size(); ++i)
        for (std::size_t j = i + 1; j < subjects.size(); ++j)
            if (subjects[i].label == subjects[j].label) pairs.push_back({i, j});
    return pairs;
}

double mm_component(const MultiMatchResult& r, Measure m) {
    switch (m) {
        case Measure::MMShape: return r.shape;
        case Measure::MMDirection: return r.direction;
        case Measure::MMLength: return r.length;
        case Measure::MMPosition: return r.position;
        case Measure::MMDuration: return r.duration;
        default: return r.overall;
    }
}

bool is_multimatch(Measure m) { return m != Measure::KLD && m != Measure::ISC; }

// One kernel shared by the OpenMP and serial entry points.
template <bool Parallel>
std::vector<SynchronyScore> score_group(const std::string& probe_id, const std::vector<Subject>& subjects,
                                        const std::vector<Measure>& measures, const GroupOptions& opt) {
    const std::size_t n = subjects.size();
    const auto pairs = peer_pairs(subjects);
    const auto np = static_cast<std::ptrdiff_t>(pairs.size());

    const bool need_kld = std::find(measures.begin(), measures.end(), Measure::KLD) != measures.end();
    const bool need_mm = std::any_of(measures.begin(), measures.end(), is_multimatch);
    const bool need_isc = std::find(measures.begin(), measures.end(), Measure::ISC) != measures.end();

    std::vector<std::optional<DensityMap>> maps(n);
    if (need_kld) {
        for (std::size_t i = 0; i < n; ++i)
            if (!subjects[i].scanpath.fixations.empty())
                maps[i] = Parallel ? density_map(subjects[i].scanpath, opt.grid, opt.sigma_px, opt.weighting)
                                   : density_map_serial(subjects[i].scanpath, opt.grid, opt.sigma_px, opt.weighting);
    }

    std::vector<PairValue> kld(pairs.size()), isc(pairs.size());
    std::vector<std::optional<MultiMatchResult>> mm(pairs.size());

    auto work = [&](std::ptrdiff_t p) {
        const PairIndex& pi = pairs[static_cast<std::size_t>(p)];
        const Subject& a = subjects[pi.i];
        const Subject& b = subjects[pi.j];
        if (need_kld && maps[pi.i] && maps[pi.j]) {
            if (opt.symmetrize_kld) {
                const double d = kl_divergence(*maps[pi.i], *maps[pi.j], true);
                kld[static_cast<std::size_t>(p)] = {d, d};
            } else {
                kld[static_cast<std::size_t>(p)] = {kl_divergence(*maps[pi.i], *maps[pi.j], false),
                                                    kl_divergence(*maps[pi.j], *maps[pi.i], false)};
            }
        }
        if (need_mm && a.scanpath.fixations.size() >= 2 && b.scanpath.fixations.size() >= 2)
            mm[static_cast<std::size_t>(p)] = multimatch(a.scanpath, b.scanpath);
        if (need_isc && a.trace && b.trace) {
            MaybeReal r;
            try {
                r = isc_pair(*a.trace, *b.trace);
            } catch (const Error&) {
                r = std::nullopt;
            }
            isc[static_cast<std::size_t>(p)] = {r, r};
        }
    };
    if constexpr (Parallel) {
#pragma omp parallel for schedule(dynamic)
        for (std::ptrdiff_t p = 0; p < np; ++p) work(p);
    } else {
        for (std::ptrdiff_t p = 0; p < np; ++p) work(p);
    }

    std::vector<SynchronyScore> out;
    for (Measure m : measures) {
        std::vector<double> sum(n, 0.0);
        std::vector<std::size_t> count(n, 0), peers(n, 0);
        for (std::size_t p = 0; p < pairs.size(); ++p) {
            const auto [i, j] = pairs[p];
            ++peers[i];
            ++peers[j];
            MaybeReal ab, ba;
            if (m == Measure::KLD) {
                ab = kld[p].ab;
                ba = kld[p].ba;
            } else if (m == Measure::ISC) {
                ab = isc[p].ab;
                ba = isc[p].ba;
            } else if (mm[p]) {
                ab = ba = mm_component(*mm[p], m);
            }
            if (ab) {
                sum[i] += *ab;
                ++count[i];
            }
            if (ba) {
                sum[j] += *ba;
                ++count[j];
            }
        }
        std::vector<SynchronyScore> block;
        std::vector<double> scored;
        for (std::size_t i = 0; i < n; ++i) {
            SynchronyScore s;
            s.person_id = subjects[i].person_id;
            s.probe_id = probe_id;
            s.measure = m;
            s.label = subjects[i].label;
            s.n_peers = peers[i];
            if (peers[i] == 0) {
                s.reason = "no peers";
            } else if (count[i] == 0) {
                s.reason = "measure undefined";
            } else {
                s.raw = sum[i] / static_cast<double>(count[i]);
                scored.push_back(*s.raw);
            }
            block.push_back(std::move(s));
        }
        const double mu = stats::mean(scored);
        const double sd = stats::stddev(scored);
        for (auto& s : block) {
            if (!s.raw) continue;
            s.z = (scored.size() >= 2 && sd > 0.0) ? (*s.raw - mu) / sd : 0.0;
        }
        for (auto& s : block) out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

std::vector<SynchronyScore> group_scores(const std::string& probe_id, const std::vector<Subject>& subjects,
                                         const std::vector<Measure>& measures, const GroupOptions& options) {
    return score_group<true>(probe_id, subjects, measures, options);
}

std::vector<SynchronyScore> group_scores_serial(const std::string& probe_id, const std::vector<Subject>& subjects,
                                                const std::vector<Measure>& measures, const GroupOptions& options) {
    return score_group<false>(probe_id, subjects, measures, options);
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

void write_density_csv(std::ostream& out, const DensityMap& map) {
    char buf[40];
    for (std::size_t r = 0; r < map.rows; ++r) {
        for (std::size_t c = 0; c < map.cols; ++c) {
            if (c) out << ',';
            std::snprintf(buf, sizeof buf, "%.6g", map.at(r, c));
            out << buf;
        }
        out << '\n';
    }
}

void write_density_pgm(std::ostream& out, const DensityMap& map) {
    double peak = 0.0;
    for (double v : map.values) peak = std::max(peak, v);
    out << "P5\n" << map.cols << ' ' << map.rows << "\n65535\n";
    for (double v : map.values) {
        const auto level = static_cast<std::uint16_t>(peak > 0.0 ? std::lround(v / peak * 65535.0) : 0);
        const char bytes[2] = {static_cast<char>(level >> 8), static_cast<char>(level & 0xff)};
        out.write(bytes, 2);
    }
}

}  // namespace attnkit::synchrony
