#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace attnkit::ml {

struct Fold {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
    std::vector<std::string> test_persons;
};

struct FoldScheme {
    enum class Kind { LeaveOnePersonOut, PersonKFold } kind = Kind::LeaveOnePersonOut;
    std::size_t k = 4;
};

FoldScheme fold_scheme_from_string(const std::string& s, std::size_t k);

// Person-independent folds. LOPO emits one fold per person in sorted person order;
// person k-fold shuffles persons with the seed and deals them round-robin.
std::vector<Fold> make_folds(const std::vector<std::string>& person_ids, const FoldScheme& scheme, std::uint64_t seed);

}  // namespace attnkit::ml
