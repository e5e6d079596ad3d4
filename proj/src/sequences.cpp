#include "attnkit/sequences.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "attnkit/stats.hpp"

namespace attnkit::sequences {

Alphabet::Alphabet(std::vector<std::string> symbols) : symbols_(std::move(symbols)) {
    if (symbols_.empty()) throw Error("alphabet must declare at least one state");
    for (std::size_t i = 0; i < symbols_.size(); ++i)
        for (std::size_t j = i + 1; j < symbols_.size(); ++j)
            if (symbols_[i] == symbols_[j]) throw Error("duplicate alphabet symbol '" + symbols_[i] + "'");
}

std::size_t Alphabet::encode(const std::string& symbol) const {
    for (std::size_t i = 0; i < symbols_.size(); ++i)
        if (symbols_[i] == symbol) return i;
    throw Error("state '" + symbol + "' is not in the alphabet");
}

ProbeSequence make_sequence(const Alphabet& alphabet, std::string person_id, const std::vector<std::string>& labels) {
    ProbeSequence s;
    s.person_id = std::move(person_id);
    for (const auto& l : labels) s.states.push_back(alphabet.encode(l));
    if (s.states.empty()) throw Error("sequence for '" + s.person_id + "' is empty");
    return s;
}

double om_distance(const ProbeSequence& a, const ProbeSequence& b, const OmCosts& costs, std::size_t alphabet_size) {
    for (const auto* s : {&a, &b})
        for (std::size_t code : s->states)
            if (code >= alphabet_size)
                throw Error("sequence '" + s->person_id + "' holds a state outside the alphabet");
    const std::size_t n = a.states.size(), m = b.states.size();
    std::vector<double> prev(m + 1), cur(m + 1);
    for (std::size_t j = 0; j <= m; ++j) prev[j] = static_cast<double>(j) * costs.indel;
    for (std::size_t i = 1; i <= n; ++i) {
        cur[0] = static_cast<double>(i) * costs.indel;
        for (std::size_t j = 1; j <= m; ++j) {
            const double sub = prev[j - 1] + (a.states[i - 1] == b.states[j - 1] ? 0.0 : costs.substitution);
            cur[j] = std::min({sub, prev[j] + costs.indel, cur[j - 1] + costs.indel});
        }
        std::swap(prev, cur);
    }
    return prev[m];
}

namespace {

DistanceMatrix make_matrix(std::size_t n) {
    if (n < 2) throw Error("distance_matrix: need at least two sequences");
    DistanceMatrix d;
    d.n = n;
    d.values.assign(n * n, 0.0);
    return d;
}

}  // namespace

DistanceMatrix distance_matrix(const std::vector<ProbeSequence>& seqs, const OmCosts& costs, std::size_t alphabet_size) {
    DistanceMatrix d = make_matrix(seqs.size());
    const auto n = static_cast<std::ptrdiff_t>(seqs.size());
    // Each row writes only its upper triangle and the mirrored lower cells, so rows never collide.
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        for (std::ptrdiff_t j = i + 1; j < n; ++j) {
            const double v = om_distance(seqs[static_cast<std::size_t>(i)], seqs[static_cast<std::size_t>(j)], costs,
                                         alphabet_size);
            d(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = v;
            d(static_cast<std::size_t>(j), static_cast<std::size_t>(i)) = v;
        }
    }
    return d;
}

DistanceMatrix distance_matrix_serial(const std::vector<ProbeSequence>& seqs, const OmCosts& costs,
                                      std::size_t alphabet_size) {
    DistanceMatrix d = make_matrix(seqs.size());
    for (std::size_t i = 0; i < seqs.size(); ++i)
        for (std::size_t j = i + 1; j < seqs.size(); ++j) d(i, j) = d(j, i) = om_distance(seqs[i], seqs[j], costs, alphabet_size);
    return d;
}

Dendrogram ward_cluster(const DistanceMatrix& d, WardInput input) {
    const std::size_t n = d.n;
    if (n < 1) throw Error("ward_cluster: empty matrix");
    struct Cluster {
        std::size_t node;
        std::size_t min_leaf;
        std::size_t size;
    };
    std::vector<Cluster> active;
    for (std::size_t i = 0; i < n; ++i) active.push_back({i, i, 1});
    // Pairwise merge costs between active clusters, indexed by position in `active`.
    std::vector<std::vector<double>> cost(n, std::vector<double>(n, 0.0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double v = d(i, j);
            if (v < 0.0 || !std::isfinite(v)) throw Error("ward_cluster: invalid dissimilarity");
            cost[i][j] = input == WardInput::Squared ? v * v : v;
        }

    Dendrogram dg;
    dg.leaves = n;
    while (active.size() > 1) {
        std::size_t bi = 0, bj = 1;
        double best = std::numeric_limits<double>::infinity();
        auto key = [&](std::size_t i, std::size_t j) {
            const std::size_t a = std::min(active[i].min_leaf, active[j].min_leaf);
            const std::size_t b = std::max(active[i].min_leaf, active[j].min_leaf);
            return std::pair{a, b};
        };
        for (std::size_t i = 0; i < active.size(); ++i) {
            for (std::size_t j = i + 1; j < active.size(); ++j) {
                const double c = cost[i][j];
                if (c < best || (c == best && key(i, j) < key(bi, bj))) {
                    best = c;
                    bi = i;
                    bj = j;
                }
            }
        }
        const Cluster& ci = active[bi];
        const Cluster& cj = active[bj];
        const auto ni = static_cast<double>(ci.size), nj = static_cast<double>(cj.size);
        Merge m;
        m.left = ci.min_leaf <= cj.min_leaf ? ci.node : cj.node;
        m.right = ci.min_leaf <= cj.min_leaf ? cj.node : ci.node;
        m.height = input == WardInput::Squared ? std::sqrt(std::max(best, 0.0)) : best;
        m.size = ci.size + cj.size;
        dg.merges.push_back(m);

        // Lance-Williams update into slot bi; slot bj is removed.
        for (std::size_t k = 0; k < active.size(); ++k) {
            if (k == bi || k == bj) continue;
            const double nk = static_cast<double>(active[k].size);
            const double v = ((ni + nk) * cost[bi][k] + (nj + nk) * cost[bj][k] - nk * best) / (ni + nj + nk);
            cost[bi][k] = cost[k][bi] = v;
        }
        active[bi] = {n + dg.merges.size() - 1, std::min(ci.min_leaf, cj.min_leaf), m.size};
        active.erase(active.begin() + static_cast<std::ptrdiff_t>(bj));
        cost.erase(cost.begin() + static_cast<std::ptrdiff_t>(bj));
        for (auto& row : cost) row.erase(row.begin() + static_cast<std::ptrdiff_t>(bj));
    }
    return dg;
}

std::vector<int> cut(const Dendrogram& dg, std::size_t k) {
    const std::size_t n = dg.leaves;
    if (k < 1 || k > n) throw Error("cut: k must lie in [1, " + std::to_string(n) + "]");
    // Union-find over node ids.
    std::vector<std::size_t> parent(n + dg.merges.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto find = [&](std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (std::size_t s = 0; s + k < n; ++s) {
        const Merge& m = dg.merges[s];
        parent[find(m.left)] = n + s;
        parent[find(m.right)] = n + s;
    }
    struct Group {
        std::size_t root;
        std::size_t size = 0;
        std::size_t min_leaf;
    };
    std::vector<Group> groups;
    std::vector<std::size_t> root_of(n);
    for (std::size_t i = 0; i < n; ++i) {
        root_of[i] = find(i);
        auto it = std::find_if(groups.begin(), groups.end(), [&](const Group& g) { return g.root == root_of[i]; });
        if (it == groups.end()) groups.push_back({root_of[i], 1, i});
        else ++it->size;
    }
    std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) {
        return a.size != b.size ? a.size > b.size : a.min_leaf < b.min_leaf;
    });
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t g = 0; g < groups.size(); ++g)
            if (groups[g].root == root_of[i]) labels[i] = static_cast<int>(g) + 1;
    return labels;
}

ClusterDiagnostics diagnostics(const DistanceMatrix& d, const std::vector<int>& labels) {
    const std::size_t n = d.n;
    if (labels.size() != n) throw Error("diagnostics: assignment length does not match the matrix");
    std::vector<int> ids = labels;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    if (ids.size() < 2) throw Error("diagnostics: silhouette undefined for a single cluster");

    ClusterDiagnostics out;
    out.k = ids.size();

    // Average silhouette width.
    double asw = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> sum(ids.size(), 0.0);
        std::vector<std::size_t> cnt(ids.size(), 0);
        for (std::size_t j = 0; j < n; ++j) {
            if (j == i) continue;
            const auto g = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), labels[j]) - ids.begin());
            sum[g] += d(i, j);
            ++cnt[g];
        }
        const auto own = static_cast<std::size_t>(std::lower_bound(ids.begin(), ids.end(), labels[i]) - ids.begin());
        if (cnt[own] == 0) continue;  // singleton contributes 0
        const double a = sum[own] / static_cast<double>(cnt[own]);
        double b = std::numeric_limits<double>::infinity();
        for (std::size_t g = 0; g < ids.size(); ++g)
            if (g != own && cnt[g] > 0) b = std::min(b, sum[g] / static_cast<double>(cnt[g]));
        const double denom = std::max(a, b);
        if (denom > 0.0) asw += (b - a) / denom;
    }
    out.average_silhouette_width = asw / static_cast<double>(n);

    // Hubert's C and point-biserial over all unordered pairs.
    std::vector<double> dist;
    std::vector<double> between;
    double within_sum = 0.0;
    std::size_t within_count = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            dist.push_back(d(i, j));
            const bool same = labels[i] == labels[j];
            between.push_back(same ? 0.0 : 1.0);
            if (same) {
                within_sum += d(i, j);
                ++within_count;
            }
        }
    std::vector<double> sorted = dist;
    std::sort(sorted.begin(), sorted.end());
    double s_min = 0.0, s_max = 0.0;
    for (std::size_t k = 0; k < within_count; ++k) {
        s_min += sorted[k];
        s_max += sorted[sorted.size() - 1 - k];
    }
    out.huberts_c = s_max > s_min ? std::clamp((within_sum - s_min) / (s_max - s_min), 0.0, 1.0) : 0.0;
    out.point_biserial = stats::pearson(dist, between).value_or(0.0);
    return out;
}

std::vector<ClusterDiagnostics> diagnostics_range(const DistanceMatrix& d, const Dendrogram& dg, std::size_t k_max) {
    std::vector<ClusterDiagnostics> out;
    k_max = std::min(k_max, dg.leaves);
    for (std::size_t k = 2; k <= k_max; ++k) out.push_back(diagnostics(d, cut(dg, k)));
    return out;
}

}  // namespace attnkit::sequences
