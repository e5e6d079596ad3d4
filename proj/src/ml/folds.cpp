#include "attnkit/ml/folds.hpp"

#include <algorithm>
#include <map>

#include "attnkit/common.hpp"
#include "attnkit/random.hpp"

namespace attnkit::ml {

FoldScheme fold_scheme_from_string(const std::string& s, std::size_t k) {
    if (s == "lopo") return {FoldScheme::Kind::LeaveOnePersonOut, 0};
    if (s == "person_kfold") return {FoldScheme::Kind::PersonKFold, k};
    throw Error("unknown fold scheme '" + s + "'");
}

std::vector<Fold> make_folds(const std::vector<std::string>& person_ids, const FoldScheme& scheme, std::uint64_t seed) {
    std::map<std::string, std::vector<std::size_t>> by_person;
    for (std::size_t i = 0; i < person_ids.size(); ++i) {
        if (person_ids[i].empty()) throw Error("make_folds: row " + std::to_string(i) + " has no person_id");
        by_person[person_ids[i]].push_back(i);
    }
    if (by_person.size() < 2) throw Error("make_folds: need at least two persons");

    std::vector<std::string> persons;
    for (const auto& [p, rows] : by_person) persons.push_back(p);

    std::vector<std::vector<std::string>> assignment;
    if (scheme.kind == FoldScheme::Kind::LeaveOnePersonOut) {
        for (const auto& p : persons) assignment.push_back({p});
    } else {
        if (scheme.k < 2) throw Error("make_folds: k must be at least 2");
        if (scheme.k > persons.size())
            throw Error("make_folds: k = " + std::to_string(scheme.k) + " exceeds the " +
                        std::to_string(persons.size()) + " persons");
        Rng rng(seed);
        shuffle(std::span<std::string>(persons), rng);
        assignment.resize(scheme.k);
        for (std::size_t i = 0; i < persons.size(); ++i) assignment[i % scheme.k].push_back(persons[i]);
        for (auto& a : assignment) std::sort(a.begin(), a.end());
    }

    std::vector<Fold> folds;
    for (const auto& test_persons : assignment) {
        Fold f;
        f.test_persons = test_persons;
        std::vector<bool> in_test(person_ids.size(), false);
        for (const auto& p : test_persons)
            for (std::size_t r : by_person[p]) in_test[r] = true;
        for (std::size_t i = 0; i < person_ids.size(); ++i) (in_test[i] ? f.test : f.train).push_back(i);
        folds.push_back(std::move(f));
    }
    return folds;
}

}  // namespace attnkit::ml
