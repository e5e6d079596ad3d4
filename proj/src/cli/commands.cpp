#include <omp.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

#include "attnkit/cli.hpp"
#include "attnkit/csv.hpp"
#include "attnkit/features.hpp"
#include "attnkit/handraise.hpp"
#include "attnkit/ml/importance.hpp"
#include "attnkit/physio.hpp"
#include "attnkit/random.hpp"

namespace attnkit::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<int> threads;

    std::string in;
    std::string out;
    std::string geometry;
    std::string probes;
    std::string labels;
    std::string physio;
    std::string measure = "kld";
    std::string density_dir;
    std::string alphabet;
    std::optional<std::size_t> k;
    std::optional<std::size_t> k_max;
    std::optional<double> window_s;
    std::vector<std::string> features;
    std::optional<int> positive_label;
    std::string model;
    std::optional<std::string> balance;
    std::optional<std::string> model_kind;
    std::optional<std::string> folds;
    std::optional<std::size_t> fold_k;
    std::string predictions;
    std::vector<std::string> pose;
    std::string pred;
    std::string truth;
    bool unweighted = false;
};

class Run {
public:
    Run(std::string command, RunConfig config, std::ostream& out) : command_(std::move(command)), config_(std::move(config)), out_(out) {}

    const RunConfig& config() const { return config_; }
    RunConfig& config() { return config_; }
    std::ostream& out() { return out_; }

    std::string load(const std::string& path) {
        std::string bytes = read_file(path);
        inputs_.push_back({{"path", path}, {"sha256", sha256_hex(bytes)}});
        return bytes;
    }

    std::string output_path(const std::string& flag, const std::string& default_name) const {
        return flag.empty() ? (fs::path(config_.out_dir) / default_name).string() : flag;
    }

    void write(const std::string& path, const std::string& contents) {
        write_file_atomic(path, contents);
        outputs_.push_back({{"path", path}, {"sha256", sha256_hex(contents)}});
    }

    void write_manifest() {
        const json m{{"tool", "attnkit"},
                     {"version", kVersion},
                     {"command", command_},
                     {"seed", config_.seed},
                     {"config", to_json(config_)},
                     {"inputs", inputs_},
                     {"outputs", outputs_}};
        write_file_atomic((fs::path(config_.out_dir) / (command_ + ".manifest.json")).string(), m.dump(2) + "\n");
    }

private:
    std::string command_;
    RunConfig config_;
    std::ostream& out_;
    json inputs_ = json::array();
    json outputs_ = json::array();
};

std::string relative_to(const std::string& base_file, const std::string& path) {
    const fs::path p(path);
    if (p.is_absolute()) return path;
    return (fs::path(base_file).parent_path() / p).lexically_normal().string();
}

csv::Table parse_table(const std::string& bytes, const std::string& source) {
    std::istringstream in(bytes);
    return csv::Table::read(in, source);
}

std::string real(const MaybeReal& v) { return csv::format_real(v); }

// ---- gaze windows ---------------------------------------------------------

struct ProbeRow {
    std::string person_id;
    std::string probe_id;
    std::int64_t t_us = 0;
    std::string gaze;  // resolved path; empty when the file has no gaze column
};

std::vector<ProbeRow> read_probes(Run& run, const std::string& path) {
    const csv::Table t = parse_table(run.load(path), path);
    const std::size_t pc = t.require_column("person_id"), qc = t.require_column("probe_id"), tc = t.require_column("t_us");
    const auto gc = t.find_column("gaze");
    std::vector<ProbeRow> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto& row = t.row(r);
        if (row.size() != t.header().size()) throw IngestError(path + ": wrong field count", t.line_number(r));
        const auto ts = csv::parse_int(row[tc]);
        if (!ts) throw IngestError(path + ": bad t_us", t.line_number(r));
        out.push_back({row[pc], row[qc], *ts, gc && !row[*gc].empty() ? relative_to(path, row[*gc]) : ""});
    }
    return out;
}

struct Recording {
    std::string person_id;
    gaze::SampleSeries series;
    std::vector<gaze::Event> events;
    MaybeReal pupil_baseline;
};

struct ProbeWindow {
    std::size_t recording = 0;
    gaze::Window window;
};

struct GazeData {
    std::vector<Recording> recordings;
    std::vector<ProbeWindow> windows;  // probe-file order
};

GazeData gaze_windows(Run& run, const std::vector<ProbeRow>& probes) {
    const RunConfig& c = run.config();
    GazeData d;
    std::map<std::string, std::size_t> by_path;
    for (const ProbeRow& p : probes) {
        if (p.gaze.empty()) throw UsageError("probes file needs a gaze column naming each person's gaze CSV");
        auto it = by_path.find(p.gaze);
        if (it == by_path.end()) {
            std::istringstream in(run.load(p.gaze));
            Recording rec;
            rec.person_id = p.person_id;
            rec.series = gaze::load_samples(in, c.geometry, p.gaze).series;
            rec.events = gaze::detect_events(rec.series, c.detection);
            rec.pupil_baseline = features::pupil_baseline(rec.series);
            it = by_path.emplace(p.gaze, d.recordings.size()).first;
            d.recordings.push_back(std::move(rec));
        }
        const Recording& rec = d.recordings[it->second];
        if (rec.person_id != p.person_id) throw UsageError("gaze file " + p.gaze + " is shared by two persons");
        gaze::Window w = gaze::cut_window(rec.series, rec.events, p.t_us, c.window_s, c.sampling_rate_hz);
        w.person_id = p.person_id;
        w.probe_id = p.probe_id;
        d.windows.push_back({it->second, gaze::quality_filter(std::move(w), c.quality)});
    }
    return d;
}

// ---- subcommands ----------------------------------------------------------

void cmd_events(Run& run, const Options& o) {
    std::istringstream in(run.load(o.in));
    const auto loaded = gaze::load_samples(in, run.config().geometry, o.in);
    const auto events = gaze::detect_events(loaded.series, run.config().detection);
    std::ostringstream s;
    s << "kind,start_us,end_us,duration_ms,overlong,centroid_x,centroid_y,dispersion_x,dispersion_y,mean_pupil_mm,"
         "start_x,start_y,end_x,end_y,length_px,direction_px,amplitude_deg,peak_velocity_deg_s,avg_velocity_deg_s,"
         "peak_accel_deg_s2,avg_accel_deg_s2,peak_decel_deg_s2\n";
    for (const auto& e : events) {
        s << gaze::to_string(e.kind) << ',' << e.start_us << ',' << e.end_us << ',' << csv::format_real(e.duration_ms())
          << ',' << (e.kind == gaze::EventKind::Blink ? (e.overlong() ? "1" : "0") : "");
        if (e.kind == gaze::EventKind::Fixation) {
            const auto& f = e.fixation;
            s << ',' << csv::format_real(f.centroid.x) << ',' << csv::format_real(f.centroid.y) << ','
              << csv::format_real(f.dispersion.x) << ',' << csv::format_real(f.dispersion.y) << ','
              << real(f.mean_pupil_mm);
        } else {
            s << ",,,,,";
        }
        if (e.kind == gaze::EventKind::Saccade) {
            const auto& a = e.saccade;
            s << ',' << csv::format_real(a.start.x) << ',' << csv::format_real(a.start.y) << ','
              << csv::format_real(a.end.x) << ',' << csv::format_real(a.end.y) << ',' << csv::format_real(a.length_px)
              << ',' << csv::format_real(a.direction_px) << ',' << real(a.amplitude_deg) << ','
              << real(a.peak_velocity_deg_s) << ',' << real(a.avg_velocity_deg_s) << ',' << real(a.peak_accel_deg_s2)
              << ',' << real(a.avg_accel_deg_s2) << ',' << real(a.peak_decel_deg_s2);
        } else {
            s << ",,,,,,,,,,,,";
        }
        s << '\n';
    }
    run.write(run.output_path(o.out, "events.csv"), s.str());
    run.out() << events.size() << " events from " << loaded.series.samples.size() << " samples ("
              << loaded.report.malformed_rows << " malformed rows skipped)\n";
}

std::map<std::string, physio::PhysioAnalysis> physio_analyses(Run& run, const std::string& path) {
    std::istringstream in(run.load(path));
    std::map<std::string, physio::PhysioAnalysis> out;
    for (const auto& [person, rec] : physio::load_physio(in, path)) out.emplace(person, physio::analyze(rec));
    return out;
}

void cmd_features(Run& run, const Options& o) {
    const auto probes = read_probes(run, o.probes);
    const GazeData d = gaze_windows(run, probes);
    std::map<std::string, physio::PhysioAnalysis> phys;
    if (!o.physio.empty()) phys = physio_analyses(run, o.physio);
    const physio::PhysioAnalysis none;

    std::vector<features::FeatureVector> vectors;
    std::ostringstream windows;
    windows << "person_id,probe_id,start_us,end_us,tracking_ratio,accepted,reason\n";
    for (const ProbeWindow& pw : d.windows) {
        const gaze::Window& w = pw.window;
        windows << csv::escape(w.person_id) << ',' << csv::escape(w.probe_id) << ',' << w.start_us << ',' << w.end_us
                << ',' << csv::format_real(w.tracking_ratio) << ',' << (w.accepted ? 1 : 0) << ','
                << csv::escape(w.rejection_reason.value_or("")) << '\n';
        if (!w.accepted) continue;
        auto fv = features::extract_feature_vector(w, run.config().geometry,
                                                   {d.recordings[pw.recording].pupil_baseline});
        if (!o.physio.empty()) {
            auto it = phys.find(w.person_id);
            fv.concat(physio::window_features(it == phys.end() ? none : it->second, w.person_id, w.probe_id,
                                              w.start_us, w.end_us));
        }
        vectors.push_back(std::move(fv));
    }
    std::ostringstream s;
    ml::write_feature_csv(s, ml::to_table(vectors));
    run.write(run.output_path(o.out, "features.csv"), s.str());
    run.write((fs::path(run.config().out_dir) / "windows.csv").string(), windows.str());
    run.out() << vectors.size() << " of " << d.windows.size() << " windows accepted\n";
}

std::map<std::pair<std::string, std::string>, std::string> read_attention_labels(Run& run, const std::string& path) {
    const csv::Table t = parse_table(run.load(path), path);
    const std::size_t pc = t.require_column("person_id"), qc = t.require_column("probe_id"), lc = t.require_column("label");
    std::map<std::pair<std::string, std::string>, std::string> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto& row = t.row(r);
        if (row.size() != t.header().size()) throw IngestError(path + ": wrong field count", t.line_number(r));
        if (!out.emplace(std::pair{row[pc], row[qc]}, row[lc]).second)
            throw IngestError(path + ": duplicate label", t.line_number(r));
    }
    return out;
}

std::string file_safe(const std::string& s) {
    std::string out;
    for (char ch : s) out.push_back(std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '.' ? ch : '_');
    return out;
}

void cmd_synchrony(Run& run, const Options& o) {
    const RunConfig& c = run.config();
    const auto measures = synchrony::measures_from_flag(o.measure);
    const auto probes = read_probes(run, o.probes);
    const auto labels = read_attention_labels(run, o.labels);
    const GazeData d = gaze_windows(run, probes);

    synchrony::GroupOptions opt;
    opt.grid = {c.synchrony.grid_cols, c.synchrony.grid_rows, c.geometry.screen_px};
    opt.sigma_px = c.synchrony.sigma_px.value_or(synchrony::default_sigma_px(c.geometry));
    opt.weighting = c.synchrony.weighting;
    opt.symmetrize_kld = c.synchrony.symmetrize_kld;
    const bool isc = std::find(measures.begin(), measures.end(), synchrony::Measure::ISC) != measures.end();
    const auto period = static_cast<std::int64_t>(std::llround(c.synchrony.isc_period_ms * 1000.0));

    std::vector<std::string> probe_order;
    std::map<std::string, std::vector<synchrony::Subject>> by_probe;
    for (const ProbeWindow& pw : d.windows) {
        const gaze::Window& w = pw.window;
        auto label = labels.find({w.person_id, w.probe_id});
        if (!w.accepted || label == labels.end()) continue;
        if (!by_probe.count(w.probe_id)) probe_order.push_back(w.probe_id);
        synchrony::Subject s{w.person_id, label->second, synchrony::Scanpath::from_events(w.events, c.geometry.screen_px), {}};
        if (isc) {
            const auto frames = static_cast<std::size_t>((w.end_us - w.start_us) / period);
            s.trace = synchrony::resample_trace(d.recordings[pw.recording].series, w.start_us, period, frames);
            s.trace->t0_us = 0;  // persons share the stimulus clock, not the recording clock
        }
        if (!o.density_dir.empty() && !s.scanpath.fixations.empty()) {
            const auto map = synchrony::density_map(s.scanpath, opt.grid, opt.sigma_px, opt.weighting);
            const std::string stem = (fs::path(o.density_dir) / (file_safe(w.person_id) + "_" + file_safe(w.probe_id))).string();
            std::ostringstream csv_out, pgm_out;
            synchrony::write_density_csv(csv_out, map);
            synchrony::write_density_pgm(pgm_out, map);
            run.write(stem + ".csv", csv_out.str());
            run.write(stem + ".pgm", pgm_out.str());
        }
        by_probe[w.probe_id].push_back(std::move(s));
    }

    std::ostringstream s;
    s << "person_id,probe_id,measure,raw,z,n_peers,label\n";
    std::size_t rows = 0;
    for (const auto& probe : probe_order)
        for (const auto& sc : synchrony::group_scores(probe, by_probe[probe], measures, opt)) {
            s << csv::escape(sc.person_id) << ',' << csv::escape(sc.probe_id) << ',' << synchrony::to_string(sc.measure)
              << ',' << real(sc.raw) << ',' << real(sc.z) << ',' << sc.n_peers << ',' << csv::escape(sc.label) << '\n';
            ++rows;
        }
    run.write(run.output_path(o.out, "synchrony.csv"), s.str());
    run.out() << rows << " synchrony scores over " << probe_order.size() << " probes\n";
}

void cmd_cluster(Run& run, const Options& o) {
    const RunConfig& c = run.config();
    const csv::Table t = parse_table(run.load(o.in), o.in);
    const std::size_t pc = t.require_column("person_id");
    std::vector<std::string> persons;
    std::vector<std::vector<std::string>> raw;
    std::set<std::string> seen;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto& row = t.row(r);
        std::vector<std::string> states;
        for (std::size_t k = 0; k < row.size(); ++k) {
            if (k == pc) continue;
            if (row[k].empty()) break;
            states.push_back(row[k]);
            seen.insert(row[k]);
        }
        persons.push_back(row[pc]);
        raw.push_back(std::move(states));
    }
    std::vector<std::string> symbols;
    if (o.alphabet.empty()) {
        symbols.assign(seen.begin(), seen.end());
    } else {
        std::stringstream ss(o.alphabet);
        for (std::string tok; std::getline(ss, tok, ',');) symbols.push_back(tok);
    }
    const sequences::Alphabet alphabet(symbols);
    std::vector<sequences::ProbeSequence> seqs;
    for (std::size_t i = 0; i < raw.size(); ++i) seqs.push_back(sequences::make_sequence(alphabet, persons[i], raw[i]));

    const sequences::OmCosts costs{c.sequences.indel, c.sequences.substitution};
    const auto dm = sequences::distance_matrix(seqs, costs, alphabet.size());
    const auto dg = sequences::ward_cluster(dm, c.sequences.ward_input);
    const std::size_t k = o.k.value_or(c.sequences.k);
    const auto labels = sequences::cut(dg, k);

    std::ostringstream assign;
    assign << "person_id,cluster\n";
    for (std::size_t i = 0; i < persons.size(); ++i) assign << csv::escape(persons[i]) << ',' << labels[i] << '\n';

    json merges = json::array();
    for (const auto& m : dg.merges) merges.push_back({{"left", m.left}, {"right", m.right}, {"height", m.height}, {"size", m.size}});
    const json dendro{{"leaves", persons}, {"merges", merges}};

    std::ostringstream diag;
    diag << "k,asw,huberts_c,point_biserial\n";
    for (const auto& r : sequences::diagnostics_range(dm, dg, o.k_max.value_or(c.sequences.k_max)))
        diag << r.k << ',' << csv::format_real(r.average_silhouette_width) << ',' << csv::format_real(r.huberts_c) << ','
             << csv::format_real(r.point_biserial) << '\n';

    run.write(run.output_path(o.out, "assignments.csv"), assign.str());
    run.write((fs::path(c.out_dir) / "dendrogram.json").string(), dendro.dump(2) + "\n");
    run.write((fs::path(c.out_dir) / "diagnostics.csv").string(), diag.str());
    run.out() << persons.size() << " sequences in " << k << " clusters\n";
}

void cmd_physio(Run& run, const Options& o) {
    const auto phys = physio_analyses(run, o.in);
    const auto probes = read_probes(run, o.probes);
    const physio::PhysioAnalysis none;
    const auto span = static_cast<std::int64_t>(std::llround(run.config().window_s * 1e6));
    std::vector<features::FeatureVector> vectors;
    for (const ProbeRow& p : probes) {
        auto it = phys.find(p.person_id);
        if (it == phys.end()) warn("physio: no recording for person '" + p.person_id + "'");
        vectors.push_back(physio::window_features(it == phys.end() ? none : it->second, p.person_id, p.probe_id,
                                                  p.t_us - span, p.t_us));
    }
    std::ostringstream s;
    ml::write_feature_csv(s, ml::to_table(vectors));
    run.write(run.output_path(o.out, "physio_features.csv"), s.str());
    run.out() << vectors.size() << " physio windows\n";
}

ml::Dataset load_dataset(Run& run, const Options& o) {
    if (o.features.empty()) throw UsageError("--features is required");
    std::vector<ml::FeatureTable> tables;
    for (const auto& f : o.features) {
        std::istringstream in(run.load(f));
        tables.push_back(ml::read_feature_csv(in, f));
    }
    std::istringstream lin(run.load(o.labels));
    auto labels = ml::read_label_csv(lin, o.labels);
    if (o.positive_label)
        for (auto& l : labels) l.label = l.label == *o.positive_label ? 1 : 0;
    for (const auto& l : labels)
        if (l.label > 1) throw UsageError("labels are not binary; pass --positive-label for one-vs-rest");
    ml::Dataset d = ml::make_dataset(ml::fuse(tables), labels);
    if (d.size() == 0) throw Error("no labelled feature rows");
    return d;
}

json model_document(const ml::FittedPipeline& p, std::uint64_t seed) {
    json j = p.to_json();
    j["run_seed"] = seed;
    return j;
}

ml::FittedPipeline load_model(Run& run, const std::string& path) {
    json j;
    try {
        j = json::parse(run.load(path));
    } catch (const json::parse_error&) {
        throw Error(path + ": not valid JSON");
    }
    j.erase("run_seed");
    try {
        return ml::FittedPipeline::from_json(j);
    } catch (const json::exception& e) {
        throw Error(path + ": malformed model document (" + e.what() + ")");
    }
}

void cmd_train(Run& run, const Options& o) {
    const ml::Dataset d = load_dataset(run, o);
    std::vector<std::size_t> rows(d.size());
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    const auto p = ml::fit_pipeline(d, rows, run.config().pipeline, derive_seed(run.config().seed, 1));
    run.write(run.output_path(o.out, "model.json"), model_document(p, run.config().seed).dump(2) + "\n");
    run.out() << "trained " << ml::to_string(p.model.spec().kind) << " on " << d.size() << " rows, "
              << p.model.n_features() << " features\n";
}

void write_cv(Run& run, const ml::Dataset& d, const std::vector<ml::Fold>& folds, const ml::CvResult& cv,
              const std::string& metrics_path, const std::string& predictions_name) {
    json m = to_json(cv);
    m["n_rows"] = d.size();
    m["n_folds"] = folds.size();
    m["scheme"] = run.config().folds.kind == ml::FoldScheme::Kind::LeaveOnePersonOut ? "lopo" : "person_kfold";
    run.write(metrics_path, m.dump(2) + "\n");

    std::ostringstream s;
    s << "person_id,probe_id,label,score" << (d.has_groups() ? ",group" : "") << '\n';
    for (std::size_t r = 0; r < d.size(); ++r) {
        s << csv::escape(d.person_ids[r]) << ',' << csv::escape(d.probe_ids[r]) << ',' << d.labels[r] << ','
          << csv::format_real(cv.oof_scores[r]);
        if (d.has_groups()) s << ',' << csv::escape(d.groups[r]);
        s << '\n';
    }
    run.write((fs::path(run.config().out_dir) / predictions_name).string(), s.str());
}

void cmd_evaluate(Run& run, const Options& o) {
    const ml::Dataset d = load_dataset(run, o);
    const auto folds = ml::make_folds(d.person_ids, run.config().folds, derive_seed(run.config().seed, 0));
    const auto cv = ml::cross_validate(d, folds, run.config().pipeline, derive_seed(run.config().seed, 1));
    write_cv(run, d, folds, cv, run.output_path(o.out, "metrics.json"), "predictions.csv");
    run.out() << folds.size() << " folds; pooled AUC-PR " << real(cv.pooled.auc_pr) << ", F1 "
              << real(cv.pooled.positive.f1) << '\n';
}

void cmd_sweep(Run& run, const Options& o) {
    const csv::Table t = parse_table(run.load(o.predictions), o.predictions);
    const std::size_t lc = t.require_column("label"), sc = t.require_column("score");
    std::vector<double> scores;
    std::vector<int> labels;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto l = csv::parse_int(t.row(r)[lc]);
        const auto s = csv::parse_real(t.row(r)[sc]);
        if (!l || !s) throw IngestError(o.predictions + ": bad label or score", t.line_number(r));
        labels.push_back(static_cast<int>(*l));
        scores.push_back(*s);
    }
    const auto sweep = ml::threshold_sweep(scores, labels);
    std::ostringstream s;
    s << "threshold,precision,recall,f1,tp,fp,tn,fn\n";
    json reports = json::array();
    for (const auto& r : sweep.reports) {
        s << csv::format_real(r.threshold) << ',' << real(r.positive.precision) << ',' << real(r.positive.recall) << ','
          << real(r.positive.f1) << ',' << r.tp << ',' << r.fp << ',' << r.tn << ',' << r.fn << '\n';
        reports.push_back(ml::to_json(r));
    }
    const json j{{"best_threshold", sweep.best_threshold},
                 {"best_f1", sweep.best_f1 ? json(*sweep.best_f1) : json(nullptr)},
                 {"reports", reports}};
    run.write(run.output_path(o.out, "sweep.csv"), s.str());
    run.write((fs::path(run.config().out_dir) / "sweep.json").string(), j.dump(2) + "\n");
    run.out() << "best threshold " << csv::format_real(sweep.best_threshold) << ", F1 " << real(sweep.best_f1) << '\n';
}

void cmd_importance(Run& run, const Options& o) {
    const ml::FittedPipeline p = load_model(run, o.model);
    const ml::Dataset d = load_dataset(run, o);
    if (d.feature_names.size() < p.transform.input_names.size())
        throw Error("feature files do not provide every column the model was fitted on");
    // Re-key the dataset columns to the model's input layout.
    std::map<std::string, std::size_t> col;
    for (std::size_t c = 0; c < d.feature_names.size(); ++c) col[d.feature_names[c]] = c;
    std::vector<std::vector<MaybeReal>> rows(d.size());
    for (const auto& name : p.transform.input_names) {
        auto it = col.find(name);
        if (it == col.end()) throw Error("feature '" + name + "' used by the model is missing");
        for (std::size_t r = 0; r < d.size(); ++r) rows[r].push_back(d.rows[r][it->second]);
    }
    const ml::Matrix x = p.transform.apply(rows);
    const auto imp = ml::permutation_importance(p.model, x, d.labels, run.config().pipeline.importance_repeats,
                                                derive_seed(run.config().seed, 2));
    const auto names = p.transform.kept_names();
    std::ostringstream s;
    s << "rank,feature,importance\n";
    std::size_t rank = 1;
    for (std::size_t i : ml::top_k(imp, imp.size()))
        s << rank++ << ',' << csv::escape(names[i]) << ',' << csv::format_real(imp[i]) << '\n';
    run.write(run.output_path(o.out, "importance.csv"), s.str());
    run.out() << imp.size() << " feature importances\n";
}

handraise::Video load_video(Run& run, const std::string& path) {
    std::istringstream in(run.load(path));
    const auto frames = handraise::load_pose_frames(in, path);
    handraise::Video v;
    v.video_id = fs::path(path).stem().string();
    v.fps = frames.empty() ? handraise::kDefaultFps : frames.front().fps;
    v.tracklets = handraise::track(frames);
    return v;
}

void cmd_handraise_train(Run& run, const Options& o) {
    if (o.pose.empty()) throw UsageError("--pose is required");
    std::vector<handraise::Video> videos;
    std::set<std::string> ids;
    for (const auto& p : o.pose) {
        videos.push_back(load_video(run, p));
        if (!ids.insert(videos.back().video_id).second) throw UsageError("two pose files share the video id " + videos.back().video_id);
    }
    std::istringstream lin(run.load(o.labels));
    const ml::Dataset d = handraise::window_dataset(videos, handraise::read_label_intervals(lin, o.labels));
    if (d.size() == 0) throw Error("no training windows");
    ml::PipelineSpec spec = run.config().pipeline;
    spec.model.class_weighting = !o.unweighted;
    const auto p = handraise::train_handraise(d, spec, derive_seed(run.config().seed, 1));
    run.write(run.output_path(o.out, "handraise_model.json"), model_document(p, run.config().seed).dump(2) + "\n");
    if (videos.size() >= 2) {
        const auto folds = ml::make_folds(d.person_ids, run.config().folds, derive_seed(run.config().seed, 0));
        const auto cv = ml::cross_validate(d, folds, spec, derive_seed(run.config().seed, 1));
        write_cv(run, d, folds, cv, (fs::path(run.config().out_dir) / "handraise_metrics.json").string(),
                 "handraise_predictions.csv");
        run.out() << "video-independent F1 " << real(cv.pooled.positive.f1) << '\n';
    }
    run.out() << "trained on " << d.size() << " windows from " << videos.size() << " videos\n";
}

void cmd_handraise_annotate(Run& run, const Options& o) {
    const ml::FittedPipeline p = load_model(run, o.model);
    const handraise::Video v = load_video(run, o.in);
    const auto events = handraise::annotate_all(v.tracklets, p, v.fps);
    std::ostringstream s;
    s << "student_id,start_s,end_s,mean_probability\n";
    for (const auto& e : events)
        s << e.student_id << ',' << csv::format_real(e.start_s) << ',' << csv::format_real(e.end_s) << ','
          << csv::format_real(e.mean_probability) << '\n';
    auto counts = handraise::count_events(events);
    for (const auto& t : v.tracklets) counts.emplace(std::to_string(t.student_id), 0);
    std::vector<std::pair<std::size_t, long long>> ordered;
    for (const auto& [k, n] : counts) ordered.push_back({std::stoul(k), n});
    std::sort(ordered.begin(), ordered.end());
    std::ostringstream c;
    c << "student_id,count\n";
    for (const auto& [k, n] : ordered) c << k << ',' << n << '\n';
    run.write(run.output_path(o.out, "handraise_events.csv"), s.str());
    run.write((fs::path(run.config().out_dir) / "handraise_counts.csv").string(), c.str());
    run.out() << events.size() << " hand-raise events across " << v.tracklets.size() << " tracklets\n";
}

std::map<std::string, long long> read_counts(Run& run, const std::string& path) {
    const csv::Table t = parse_table(run.load(path), path);
    const std::size_t sc = t.require_column("student_id"), cc = t.require_column("count");
    std::map<std::string, long long> out;
    for (std::size_t r = 0; r < t.rows(); ++r) {
        const auto n = csv::parse_int(t.row(r)[cc]);
        if (!n || *n < 0) throw IngestError(path + ": bad count", t.line_number(r));
        if (!out.emplace(t.row(r)[sc], *n).second) throw IngestError(path + ": duplicate student", t.line_number(r));
    }
    return out;
}

void cmd_handraise_eval(Run& run, const Options& o) {
    const auto pred = read_counts(run, o.pred);
    const auto truth = read_counts(run, o.truth);
    const double mae = handraise::evaluate_counts(pred, truth);
    const json j{{"mae", mae}, {"students", truth.size()}};
    run.write(run.output_path(o.out, "handraise_eval.json"), j.dump(2) + "\n");
    run.out() << "MAE " << csv::format_real(mae) << " over " << truth.size() << " students\n";
}

RunConfig effective_config(const Options& o, const std::string& command) {
    RunConfig c;
    if (!o.config_path.empty()) {
        json j;
        try {
            j = json::parse(read_file(o.config_path));
        } catch (const json::parse_error&) {
            throw UsageError(o.config_path + ": config is not valid JSON");
        }
        c = config_from_json(j);
    }
    if (o.seed) c.seed = *o.seed;
    if (o.out_dir) c.out_dir = *o.out_dir;
    if (!o.geometry.empty()) {
        try {
            c.geometry = geometry_from_json(json::parse(read_file(o.geometry)));
        } catch (const json::parse_error&) {
            throw UsageError(o.geometry + ": geometry is not valid JSON");
        }
    }
    if (o.window_s) {
        if (!(*o.window_s > 0.0)) throw UsageError("--window-s must be positive");
        c.window_s = *o.window_s;
    } else if (o.config_path.empty() && command == "physio") {
        c.window_s = 30.0;
    }
    if (o.balance) {
        try {
            c.pipeline.balance = ml::balance_method_from_string(*o.balance);
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
    }
    if (o.model_kind) {
        try {
            c.pipeline.model.kind = ml::model_kind_from_string(*o.model_kind);
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
    }
    if (o.folds || o.fold_k) {
        try {
            c.folds = ml::fold_scheme_from_string(o.folds.value_or(o.fold_k ? "person_kfold" : "lopo"), o.fold_k.value_or(4));
        } catch (const Error& e) {
            throw UsageError(e.what());
        }
    }
    return c;
}

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Gaze, physiology and pose analytics for attention research", "attnkit"};
    app.set_version_flag("--version", kVersion);
    app.require_subcommand(1);
    app.fallthrough();
    Options o;
    app.add_option("--config", o.config_path, "Run configuration JSON");
    app.add_option("--seed", o.seed, "Master seed");
    app.add_option("--out-dir", o.out_dir, "Directory for outputs and the run manifest");
    app.add_option("--threads", o.threads, "Worker threads (falls back to ATTNKIT_THREADS)")->check(CLI::PositiveNumber);

    auto* ev = app.add_subcommand("events", "Detect fixations, saccades and blinks");
    ev->add_option("--in", o.in, "Gaze CSV")->required();
    ev->add_option("--geometry", o.geometry, "Screen geometry JSON");
    ev->add_option("--out", o.out, "Events CSV");

    auto* fe = app.add_subcommand("features", "Probe-window gaze features (optionally fused with physiology)");
    fe->add_option("--probes", o.probes, "Probes CSV: person_id,probe_id,t_us,gaze")->required();
    fe->add_option("--geometry", o.geometry, "Screen geometry JSON");
    fe->add_option("--physio", o.physio, "Physiology CSV to fuse");
    fe->add_option("--window-s", o.window_s, "Window length before each probe");
    fe->add_option("--out", o.out, "Features CSV");

    auto* sy = app.add_subcommand("synchrony", "Gaze synchrony within attention groups");
    sy->add_option("--probes", o.probes, "Probes CSV: person_id,probe_id,t_us,gaze")->required();
    sy->add_option("--labels", o.labels, "Attention labels CSV: person_id,probe_id,label")->required();
    sy->add_option("--measure", o.measure, "kld, multimatch or isc");
    sy->add_option("--geometry", o.geometry, "Screen geometry JSON");
    sy->add_option("--window-s", o.window_s, "Window length before each probe");
    sy->add_option("--density-dir", o.density_dir, "Also export density maps (CSV and PGM) here");
    sy->add_option("--out", o.out, "Synchrony CSV");

    auto* cl = app.add_subcommand("cluster", "Optimal Matching + Ward clustering of probe sequences");
    cl->add_option("--in", o.in, "Sequences CSV: person_id,s1..sL")->required();
    cl->add_option("--alphabet", o.alphabet, "Comma-separated states (default: observed states, sorted)");
    cl->add_option("--k", o.k, "Number of clusters")->check(CLI::PositiveNumber);
    cl->add_option("--k-max", o.k_max, "Largest k for diagnostics")->check(CLI::PositiveNumber);
    cl->add_option("--out", o.out, "Assignments CSV");

    auto* ph = app.add_subcommand("physio", "EDA/BVP window features");
    ph->add_option("--in", o.in, "Physiology CSV: person_id,channel,t_us,value")->required();
    ph->add_option("--probes", o.probes, "Probes CSV: person_id,probe_id,t_us")->required();
    ph->add_option("--window-s", o.window_s, "Window length before each probe (default 30)");
    ph->add_option("--out", o.out, "Features CSV");

    const auto add_dataset = [&o](CLI::App* sub) {
        sub->add_option("--features", o.features, "Features CSV (repeat to fuse)")->required();
        sub->add_option("--labels", o.labels, "Labels CSV: person_id,probe_id,label[,group]")->required();
        sub->add_option("--positive-label", o.positive_label, "Treat this label as class 1, all others as 0");
    };
    auto* tr = app.add_subcommand("train", "Fit preprocessing and a classifier on all rows");
    add_dataset(tr);
    tr->add_option("--balance", o.balance, "none, random_oversample or smote");
    tr->add_option("--model", o.model_kind, "random_forest or logistic_regression");
    tr->add_option("--out", o.out, "Model JSON");

    auto* evl = app.add_subcommand("evaluate", "Person-independent cross-validation");
    add_dataset(evl);
    evl->add_option("--balance", o.balance, "none, random_oversample or smote");
    evl->add_option("--model", o.model_kind, "random_forest or logistic_regression");
    evl->add_option("--folds", o.folds, "lopo or person_kfold");
    evl->add_option("--k", o.fold_k, "Folds for person_kfold")->check(CLI::PositiveNumber);
    evl->add_option("--out", o.out, "Metrics JSON");

    auto* sw = app.add_subcommand("sweep", "Decision-threshold sweep over out-of-fold predictions");
    sw->add_option("--predictions", o.predictions, "Predictions CSV from evaluate")->required();
    sw->add_option("--out", o.out, "Sweep CSV");

    auto* im = app.add_subcommand("importance", "Permutation importance of a trained model");
    add_dataset(im);
    im->add_option("--model", o.model, "Model JSON from train")->required();
    im->add_option("--out", o.out, "Importance CSV");

    auto* ht = app.add_subcommand("handraise-train", "Train the hand-raise window classifier");
    ht->add_option("--pose", o.pose, "Pose JSON-lines file, one per video (repeatable)")->required();
    ht->add_option("--labels", o.labels, "Intervals CSV: video_id,student_id,start_s,end_s")->required();
    ht->add_flag("--unweighted", o.unweighted, "Disable class weighting");
    ht->add_option("--folds", o.folds, "lopo (leave one video out) or person_kfold");
    ht->add_option("--k", o.fold_k, "Folds for person_kfold")->check(CLI::PositiveNumber);
    ht->add_option("--out", o.out, "Model JSON");

    auto* ha = app.add_subcommand("handraise-annotate", "Annotate hand-raise events in a pose stream");
    ha->add_option("--pose", o.in, "Pose JSON-lines file")->required();
    ha->add_option("--model", o.model, "Model JSON from handraise-train")->required();
    ha->add_option("--out", o.out, "Events CSV");

    auto* he = app.add_subcommand("handraise-eval", "Mean absolute error of per-student counts");
    he->add_option("--pred", o.pred, "Predicted counts CSV: student_id,count")->required();
    he->add_option("--truth", o.truth, "True counts CSV: student_id,count")->required();
    he->add_option("--out", o.out, "Result JSON");

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    WarningSink previous = set_warning_sink([&err](const std::string& m) { err << "warning: " << m << '\n'; });
    int code = 0;
    try {
        if (o.threads) {
            omp_set_num_threads(*o.threads);
        } else if (const char* env = std::getenv("ATTNKIT_THREADS")) {
            const int n = std::atoi(env);
            if (n <= 0) throw UsageError("ATTNKIT_THREADS must be a positive integer");
            omp_set_num_threads(n);
        }
        Run run(command, effective_config(o, command), out);
        if (command == "events") cmd_events(run, o);
        else if (command == "features") cmd_features(run, o);
        else if (command == "synchrony") cmd_synchrony(run, o);
        else if (command == "cluster") cmd_cluster(run, o);
        else if (command == "physio") cmd_physio(run, o);
        else if (command == "train") cmd_train(run, o);
        else if (command == "evaluate") cmd_evaluate(run, o);
        else if (command == "sweep") cmd_sweep(run, o);
        else if (command == "importance") cmd_importance(run, o);
        else if (command == "handraise-train") cmd_handraise_train(run, o);
        else if (command == "handraise-annotate") cmd_handraise_annotate(run, o);
        else if (command == "handraise-eval") cmd_handraise_eval(run, o);
        run.write_manifest();
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        code = 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        code = 1;
    }
    set_warning_sink(std::move(previous));
    return code;
}

}  // namespace attnkit::cli
