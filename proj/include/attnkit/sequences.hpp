#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "attnkit/common.hpp"

namespace attnkit::sequences {

// Declared set of categorical states.
class Alphabet {
public:
    explicit Alphabet(std::vector<std::string> symbols);

    std::size_t size() const { return symbols_.size(); }
    const std::string& symbol(std::size_t code) const { return symbols_.at(code); }
    // Throws when the symbol is not declared.
    std::size_t encode(const std::string& symbol) const;
    const std::vector<std::string>& symbols() const { return symbols_; }

private:
    std::vector<std::string> symbols_;
};

struct ProbeSequence {
    std::string person_id;
    std::vector<std::size_t> states;  // codes into an Alphabet
};

ProbeSequence make_sequence(const Alphabet& alphabet, std::string person_id, const std::vector<std::string>& labels);

struct OmCosts {
    double indel = 1.0;
    double substitution = 1.0;
};

// Optimal Matching: minimal total insert/delete/substitute cost. Throws when a
// state code is outside [0, alphabet_size).
double om_distance(const ProbeSequence& a, const ProbeSequence& b, const OmCosts& costs, std::size_t alphabet_size);

// Square symmetric matrix, row-major.
struct DistanceMatrix {
    std::size_t n = 0;
    std::vector<double> values;

    double operator()(std::size_t i, std::size_t j) const { return values[i * n + j]; }
    double& operator()(std::size_t i, std::size_t j) { return values[i * n + j]; }
};

// Rows are filled in parallel; the serial variant is the reference.
DistanceMatrix distance_matrix(const std::vector<ProbeSequence>& seqs, const OmCosts& costs, std::size_t alphabet_size);
DistanceMatrix distance_matrix_serial(const std::vector<ProbeSequence>& seqs, const OmCosts& costs,
                                      std::size_t alphabet_size);

struct Merge {
    std::size_t left;   // node ids: leaves 0..N-1, merge s creates node N + s
    std::size_t right;
    double height;
    std::size_t size;
};

struct Dendrogram {
    std::size_t leaves = 0;
    std::vector<Merge> merges;
};

enum class WardInput { Squared, Raw };

// Agglomerative Ward clustering with Lance-Williams updates. With Squared input the
// dissimilarities are squared before merging and heights are reported back on the
// original scale (square root). Ties merge the pair with the smallest member leaves.
Dendrogram ward_cluster(const DistanceMatrix& d, WardInput input = WardInput::Squared);

// Cluster labels 1..k for each leaf, numbered by descending cluster size with
// ties broken by the smallest member leaf.
std::vector<int> cut(const Dendrogram& dendrogram, std::size_t k);

struct ClusterDiagnostics {
    std::size_t k = 0;
    double average_silhouette_width = 0.0;
    double huberts_c = 0.0;
    double point_biserial = 0.0;
};

ClusterDiagnostics diagnostics(const DistanceMatrix& d, const std::vector<int>& assignments);

// Diagnostics for every k in [2, k_max] (k_max clamped to N - 1).
std::vector<ClusterDiagnostics> diagnostics_range(const DistanceMatrix& d, const Dendrogram& dendrogram,
                                                  std::size_t k_max);

}  // namespace attnkit::sequences
