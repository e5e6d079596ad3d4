#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "attnkit/common.hpp"
#include "attnkit/features.hpp"
#include "attnkit/ml/matrix.hpp"

namespace attnkit::ml {

// Feature rows keyed by (person_id, probe_id); the in-memory form of the features CSV.
struct FeatureTable {
    std::vector<std::string> names;
    std::vector<std::string> person_ids;
    std::vector<std::string> probe_ids;
    std::vector<std::vector<MaybeReal>> values;

    std::size_t size() const { return values.size(); }
};

// Column union in first-seen order; absent entries are missing.
FeatureTable to_table(const std::vector<features::FeatureVector>& vectors);

// features CSV: person_id,probe_id,<names...>; missing is an empty field.
FeatureTable read_feature_csv(std::istream& in, const std::string& source = "<stream>");
void write_feature_csv(std::ostream& out, const FeatureTable& table);

// Early fusion: inner join on (person_id, probe_id), concatenating columns in the
// order of `tables`. Names must be unique across tables. Row order follows the first table.
FeatureTable fuse(const std::vector<FeatureTable>& tables);

struct Dataset {
    std::vector<std::string> feature_names;
    std::vector<std::string> person_ids;
    std::vector<std::string> probe_ids;
    std::vector<std::vector<MaybeReal>> rows;
    std::vector<int> labels;
    std::vector<std::string> groups;  // optional subgroup per row; empty when absent

    std::size_t size() const { return rows.size(); }
    bool has_groups() const { return !groups.empty(); }
};

struct LabelRow {
    std::string person_id;
    std::string probe_id;
    int label = 0;
    std::optional<std::string> group;
};

// labels CSV: person_id,probe_id,label[,group].
std::vector<LabelRow> read_label_csv(std::istream& in, const std::string& source = "<stream>");

// Keeps feature rows that have a label; warns about rows without one.
Dataset make_dataset(const FeatureTable& table, const std::vector<LabelRow>& labels);

struct DesignOptions {
    bool impute_mean = true;
    bool scale = true;  // z-score with the population standard deviation
    bool drop_zero_variance = true;
};

struct DroppedColumn {
    std::string name;
    std::string reason;  // "all missing" or "zero variance"
};

// Fitted preprocessing: which columns survive and how they are imputed and scaled.
struct Transform {
    std::vector<std::string> input_names;
    std::vector<std::size_t> kept;  // indices into input_names
    std::vector<double> impute;     // per kept column
    std::vector<double> center;
    std::vector<double> scale;
    std::vector<DroppedColumn> dropped;

    std::vector<std::string> kept_names() const;
    Matrix apply(const std::vector<std::vector<MaybeReal>>& rows) const;
    Transform restrict_to(std::span<const std::size_t> kept_positions) const;
};

Transform fit_transform(const Dataset& data, const DesignOptions& options,
                        std::optional<std::span<const std::size_t>> fit_rows = std::nullopt);

struct DesignMatrix {
    Matrix x;
    Transform transform;
};

// Fits on fit_rows (all rows when absent) and transforms every row.
DesignMatrix build_design_matrix(const Dataset& data, const DesignOptions& options,
                                 std::optional<std::span<const std::size_t>> fit_rows = std::nullopt);

}  // namespace attnkit::ml
