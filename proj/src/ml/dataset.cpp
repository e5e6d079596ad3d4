#include "attnkit/ml/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "attnkit/csv.hpp"

namespace attnkit::ml {

FeatureTable to_table(const std::vector<features::FeatureVector>& vectors) {
    FeatureTable t;
    std::map<std::string, std::size_t> index;
    for (const auto& fv : vectors)
        for (const auto& f : fv.entries())
            if (index.emplace(f.name, t.names.size()).second) t.names.push_back(f.name);
    for (const auto& fv : vectors) {
        t.person_ids.push_back(fv.person_id());
        t.probe_ids.push_back(fv.probe_id());
        std::vector<MaybeReal> row(t.names.size());
        for (const auto& f : fv.entries()) row[index.at(f.name)] = f.value;
        t.values.push_back(std::move(row));
    }
    return t;
}

FeatureTable read_feature_csv(std::istream& in, const std::string& source) {
    const csv::Table table = csv::Table::read(in, source);
    const std::size_t pc = table.require_column("person_id");
    const std::size_t qc = table.require_column("probe_id");
    FeatureTable t;
    std::vector<std::size_t> cols;
    std::set<std::string> seen;
    for (std::size_t c = 0; c < table.header().size(); ++c) {
        if (c == pc || c == qc) continue;
        if (!seen.insert(table.header()[c]).second)
            throw SchemaError(source + ": duplicate feature column '" + table.header()[c] + "'");
        t.names.push_back(table.header()[c]);
        cols.push_back(c);
    }
    std::set<std::pair<std::string, std::string>> keys;
    for (std::size_t r = 0; r < table.rows(); ++r) {
        const auto& row = table.row(r);
        if (row.size() != table.header().size())
            throw IngestError(source + ": wrong field count", table.line_number(r));
        if (row[pc].empty()) throw IngestError(source + ": empty person_id", table.line_number(r));
        if (!keys.emplace(row[pc], row[qc]).second)
            throw IngestError(source + ": duplicate key (" + row[pc] + ", " + row[qc] + ")", table.line_number(r));
        t.person_ids.push_back(row[pc]);
        t.probe_ids.push_back(row[qc]);
        std::vector<MaybeReal> values;
        for (std::size_t c : cols) {
            if (row[c].empty()) {
                values.push_back(std::nullopt);
                continue;
            }
            const auto v = csv::parse_real(row[c]);
            if (!v || !std::isfinite(*v))
                throw IngestError(source + ": bad value in column '" + table.header()[c] + "'", table.line_number(r));
            values.push_back(v);
        }
        t.values.push_back(std::move(values));
    }
    return t;
}

void write_feature_csv(std::ostream& out, const FeatureTable& t) {
    out << "person_id,probe_id";
    for (const auto& n : t.names) out << ',' << csv::escape(n);
    out << '\n';
    for (std::size_t r = 0; r < t.size(); ++r) {
        out << csv::escape(t.person_ids[r]) << ',' << csv::escape(t.probe_ids[r]);
        for (const auto& v : t.values[r]) out << ',' << csv::format_real(v);
        out << '\n';
    }
}

FeatureTable fuse(const std::vector<FeatureTable>& tables) {
    if (tables.empty()) throw Error("fuse: no tables");
    FeatureTable out;
    std::set<std::string> names;
    for (const auto& t : tables)
        for (const auto& n : t.names) {
            if (!names.insert(n).second) throw Error("fuse: feature name '" + n + "' appears in more than one table");
            out.names.push_back(n);
        }
    std::vector<std::map<std::pair<std::string, std::string>, std::size_t>> index(tables.size());
    for (std::size_t k = 0; k < tables.size(); ++k)
        for (std::size_t r = 0; r < tables[k].size(); ++r)
            index[k][{tables[k].person_ids[r], tables[k].probe_ids[r]}] = r;
    const FeatureTable& first = tables.front();
    for (std::size_t r = 0; r < first.size(); ++r) {
        const std::pair key{first.person_ids[r], first.probe_ids[r]};
        std::vector<MaybeReal> row;
        bool complete = true;
        for (std::size_t k = 0; k < tables.size() && complete; ++k) {
            auto it = index[k].find(key);
            if (it == index[k].end()) {
                complete = false;
                break;
            }
            const auto& v = tables[k].values[it->second];
            row.insert(row.end(), v.begin(), v.end());
        }
        if (!complete) continue;
        out.person_ids.push_back(key.first);
        out.probe_ids.push_back(key.second);
        out.values.push_back(std::move(row));
    }
    return out;
}

std::vector<LabelRow> read_label_csv(std::istream& in, const std::string& source) {
    const csv::Table table = csv::Table::read(in, source);
    const std::size_t pc = table.require_column("person_id");
    const std::size_t qc = table.require_column("probe_id");
    const std::size_t lc = table.require_column("label");
    const auto gc = table.find_column("group");
    std::vector<LabelRow> out;
    std::set<std::pair<std::string, std::string>> keys;
    for (std::size_t r = 0; r < table.rows(); ++r) {
        const auto& row = table.row(r);
        if (row.size() != table.header().size())
            throw IngestError(source + ": wrong field count", table.line_number(r));
        LabelRow l;
        l.person_id = row[pc];
        l.probe_id = row[qc];
        const auto v = csv::parse_int(row[lc]);
        if (!v || *v < 0) throw IngestError(source + ": label must be a non-negative integer", table.line_number(r));
        l.label = static_cast<int>(*v);
        if (gc) l.group = row[*gc];
        if (!keys.emplace(l.person_id, l.probe_id).second)
            throw IngestError(source + ": more than one label for (" + l.person_id + ", " + l.probe_id + ")",
                              table.line_number(r));
        out.push_back(std::move(l));
    }
    return out;
}

Dataset make_dataset(const FeatureTable& table, const std::vector<LabelRow>& labels) {
    std::map<std::pair<std::string, std::string>, const LabelRow*> index;
    bool groups = false;
    for (const auto& l : labels) {
        index[{l.person_id, l.probe_id}] = &l;
        groups = groups || l.group.has_value();
    }
    Dataset d;
    d.feature_names = table.names;
    std::size_t unlabeled = 0;
    for (std::size_t r = 0; r < table.size(); ++r) {
        auto it = index.find({table.person_ids[r], table.probe_ids[r]});
        if (it == index.end()) {
            ++unlabeled;
            continue;
        }
        d.person_ids.push_back(table.person_ids[r]);
        d.probe_ids.push_back(table.probe_ids[r]);
        d.rows.push_back(table.values[r]);
        d.labels.push_back(it->second->label);
        if (groups) d.groups.push_back(it->second->group.value_or(""));
    }
    if (unlabeled > 0) warn("make_dataset: " + std::to_string(unlabeled) + " feature rows have no label and were skipped");
    return d;
}

std::vector<std::string> Transform::kept_names() const {
    std::vector<std::string> out;
    for (std::size_t k : kept) out.push_back(input_names[k]);
    return out;
}

Matrix Transform::apply(const std::vector<std::vector<MaybeReal>>& rows) const {
    Matrix x(rows.size(), kept.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r].size() != input_names.size()) throw Error("transform: row width does not match the fitted columns");
        for (std::size_t c = 0; c < kept.size(); ++c) {
            const MaybeReal& v = rows[r][kept[c]];
            if (!v && std::isnan(impute[c]))
                throw Error("transform: missing value in '" + input_names[kept[c]] + "' with imputation disabled");
            x(r, c) = ((v ? *v : impute[c]) - center[c]) / scale[c];
        }
    }
    return x;
}

Transform Transform::restrict_to(std::span<const std::size_t> positions) const {
    Transform t;
    t.input_names = input_names;
    t.dropped = dropped;
    for (std::size_t p : positions) {
        if (p >= kept.size()) throw Error("transform: column position out of range");
        t.kept.push_back(kept[p]);
        t.impute.push_back(impute[p]);
        t.center.push_back(center[p]);
        t.scale.push_back(scale[p]);
    }
    return t;
}

Transform fit_transform(const Dataset& data, const DesignOptions& options,
                        std::optional<std::span<const std::size_t>> fit_rows) {
    if (data.size() == 0) throw Error("build_design_matrix: dataset has no rows");
    std::vector<std::size_t> all;
    if (!fit_rows) {
        all.resize(data.size());
        std::iota(all.begin(), all.end(), std::size_t{0});
    }
    const std::span<const std::size_t> rows = fit_rows ? *fit_rows : std::span<const std::size_t>(all);
    if (rows.empty()) throw Error("build_design_matrix: empty fit partition");

    Transform t;
    t.input_names = data.feature_names;
    for (std::size_t c = 0; c < data.feature_names.size(); ++c) {
        std::vector<double> present;
        bool any_missing = false;
        for (std::size_t r : rows) {
            const MaybeReal& v = data.rows[r][c];
            if (v) present.push_back(*v);
            else any_missing = true;
        }
        const std::string& name = data.feature_names[c];
        if (present.empty()) {
            warn("build_design_matrix: column '" + name + "' is entirely missing and was dropped");
            t.dropped.push_back({name, "all missing"});
            continue;
        }
        const double mean = std::accumulate(present.begin(), present.end(), 0.0) / static_cast<double>(present.size());
        // Imputed entries sit on the mean, so they add nothing to the sum of squares.
        double ss = 0.0;
        for (double v : present) ss += (v - mean) * (v - mean);
        const double sd = std::sqrt(ss / static_cast<double>(rows.size()));
        if (options.drop_zero_variance && sd == 0.0) {
            t.dropped.push_back({name, "zero variance"});
            continue;
        }
        if (any_missing && !options.impute_mean)
            throw Error("build_design_matrix: column '" + name + "' has missing values and imputation is disabled");
        t.kept.push_back(c);
        t.impute.push_back(options.impute_mean ? mean : std::numeric_limits<double>::quiet_NaN());
        t.center.push_back(options.scale ? mean : 0.0);
        t.scale.push_back(options.scale && sd > 0.0 ? sd : 1.0);
    }
    return t;
}

DesignMatrix build_design_matrix(const Dataset& data, const DesignOptions& options,
                                 std::optional<std::span<const std::size_t>> fit_rows) {
    DesignMatrix d;
    d.transform = fit_transform(data, options, fit_rows);
    d.x = d.transform.apply(data.rows);
    return d;
}

}  // namespace attnkit::ml
