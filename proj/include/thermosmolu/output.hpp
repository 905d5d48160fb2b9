#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "config.hpp"
#include "diagnostics.hpp"
#include "simulation.hpp"
#include "snapshot_io.hpp"
#include "version.hpp"

namespace thermosmolu {

/// JSON number with shortest round-trip digits; non-finite values become null.
inline std::string json_number(double v) { return std::isfinite(v) ? format_double(v) : "null"; }

inline std::string json_string(std::string_view s) { return nlohmann::json(std::string(s)).dump(); }

/// One JSON object per line, keys in observation order.
inline std::string series_ndjson(const std::vector<SeriesRecord>& series) {
    std::string out;
    for (const auto& r : series) {
        out += "{\"t\":" + json_number(r.t);
        for (const auto& [k, v] : r.values) out += "," + json_string(k) + ":" + json_number(v);
        out += "}\n";
    }
    return out;
}

/// Wide CSV: t followed by every quantity in order of first appearance; blank where not observed.
inline std::string series_csv(const std::vector<SeriesRecord>& series) {
    std::vector<std::string> columns;
    std::map<std::string, std::size_t> index;
    for (const auto& r : series)
        for (const auto& [k, v] : r.values)
            if (index.emplace(k, columns.size()).second) columns.push_back(k);
    std::string out = "t";
    for (const auto& c : columns) out += "," + c;
    out += "\n";
    for (const auto& r : series) {
        std::vector<std::string> row(columns.size());
        for (const auto& [k, v] : r.values) row[index[k]] = format_double(v);
        out += format_double(r.t);
        for (const auto& cell : row) out += "," + cell;
        out += "\n";
    }
    return out;
}

struct SnapshotEntry {
    std::size_t step = 0;
    double t = 0.0;
    std::string field; ///< theta, u1, u2, ...
    std::string file;  ///< relative to the run directory
};

namespace output_detail {

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
    out << text;
    if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::IoError, "cannot read " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string plot_script(const RunConfig& cfg, bool with_series, const std::vector<SnapshotEntry>& snaps) {
    std::string s = "# gnuplot script; run from this directory with: gnuplot plot.gp\n"
                    "set terminal pngcairo size 900,600\n"
                    "set datafile separator ','\n"
                    "set key outside\n";
    if (with_series) {
        s += "set output 'series.png'\n"
             "set xlabel 't'\n"
             "stats 'series.csv' skip 1 nooutput\n"
             "plot for [c=2:STATS_columns] 'series.csv' using 1:c with lines title columnhead(c)\n";
    }
    if (snaps.empty()) return s;
    const std::size_t last_step = snaps.back().step;
    const Grid& g = cfg.grid;
    for (const auto& e : snaps) {
        if (e.step != last_step) continue;
        const std::string png = "final_" + e.field + ".png";
        const std::string src = cfg.snapshot_format == SnapshotFormat::csv
                                    ? "'" + e.file + "' skip 1"
                                    : "'" + e.file + "' binary format='%float64' endian=little";
        s += "set output '" + png + "'\n";
        s += "set title '" + e.field + " at t = " + format_double(e.t) + "'\n";
        if (g.dim() == 1) {
            s += "set xlabel 'x'\nplot " + src + " using ($0*" + format_double(g.spacing(0)) + "):1 with lines title '" +
                 e.field + "'\n";
        } else {
            const std::string inner = std::to_string(g.points() / g.cells(0));
            s += "set view map\nsplot " + src + " using (int($0/" + inner + ")*" + format_double(g.spacing(0)) +
                 "):((int($0)%" + std::to_string(g.cells(1)) + ")*" + format_double(g.spacing(1)) +
                 "):1 with points pointtype 5 pointsize 0.5 palette title '" + e.field + "'\n";
        }
    }
    return s;
}

} // namespace output_detail

/// Single writer for one run directory.
class RunWriter {
public:
    explicit RunWriter(RunConfig cfg) : cfg_(std::move(cfg)), dir_(cfg_.output_dir) {
        std::error_code ec;
        std::filesystem::create_directories(dir_ / "snapshots", ec);
        if (ec) fail(ErrorKind::IoError, "cannot create " + (dir_ / "snapshots").string() + ": " + ec.message());
    }

    const std::filesystem::path& directory() const { return dir_; }
    const std::vector<SnapshotEntry>& snapshots() const { return snaps_; }

    /// True when `step` is due for a snapshot (initial, every snapshot_every steps, and the final step).
    bool due(std::size_t step, std::size_t final_step) const {
        if (step == 0 || step == final_step) return true;
        return cfg_.snapshot_every > 0 && step % cfg_.snapshot_every == 0;
    }

    void snapshot(const State& s, std::size_t step) {
        if (!snaps_.empty() && snaps_.back().step == step) return;
        write_one(s.theta, step, s.t, "theta");
        for (std::size_t i = 0; i < s.u.size(); ++i) write_one(s.u[i], step, s.t, species_name(i));
    }

    void finish(const SimulationResult& r) {
        using output_detail::write_text;
        std::string index = "step,t,field,file\n";
        for (const auto& e : snaps_)
            index += std::to_string(e.step) + "," + format_double(e.t) + "," + e.field + "," + e.file + "\n";
        write_text(dir_ / "snapshots" / "index.csv", index);

        const bool with_series = !cfg_.observers.empty();
        if (with_series) {
            write_text(dir_ / "series.ndjson", series_ndjson(r.series));
            write_text(dir_ / "series.csv", series_csv(r.series));
        }
        write_text(dir_ / "config.ini", render_key_values(to_key_values(cfg_)));
        write_text(dir_ / "plot.gp", output_detail::plot_script(cfg_, with_series, snaps_));
        write_text(dir_ / "manifest.json", manifest(r).dump(2) + "\n");
    }

    nlohmann::json manifest(const SimulationResult& r) const {
        nlohmann::json m;
        m["version"] = std::string(version);
        m["config"] = to_key_values(cfg_);
        m["derived"] = {{"advisory_dt", json_number_value(cfg_.advisory_dt)},
                        {"dt_auto", cfg_.dt_auto},
                        {"problem", std::string(to_string(cfg_.params.problem()))},
                        {"min_spacing", cfg_.grid.min_spacing()}};
        nlohmann::json warnings = nlohmann::json::array();
        for (const auto& [d, count] : r.warnings)
            warnings.push_back({{"code", d.code}, {"message", d.message}, {"count", count}});
        nlohmann::json violations = nlohmann::json::array();
        for (const auto& v : r.violations)
            violations.push_back({{"observer", std::string(to_string(v.kind))},
                                  {"severity", std::string(to_string(v.severity))},
                                  {"t", v.t},
                                  {"quantity", v.quantity},
                                  {"margin", json_number_value(v.margin)},
                                  {"threshold", v.threshold}});
        m["result"] = {{"steps", r.steps},
                       {"final_t", r.final_state.t},
                       {"hard_violation", r.hard_violation.has_value()},
                       {"warnings", warnings},
                       {"violations", violations}};
        if (!r.picard.empty()) {
            int max_iters = 0;
            double max_ratio = 0.0;
            for (const auto& p : r.picard) {
                max_iters = std::max(max_iters, p.iterations);
                max_ratio = std::max(max_ratio, p.max_ratio);
            }
            m["result"]["picard"] = {{"max_iterations", max_iters}, {"max_contraction_ratio", max_ratio}};
        }
        nlohmann::json files = {"manifest.json", "config.ini", "plot.gp", "snapshots/index.csv"};
        if (!cfg_.observers.empty()) files.push_back("series.ndjson"), files.push_back("series.csv");
        m["files"] = files;
        return m;
    }

private:
    static nlohmann::json json_number_value(double v) {
        if (std::isfinite(v)) return v;
        return nullptr;
    }

    void write_one(const ScalarField& f, std::size_t step, double t, const std::string& field) {
        char name[64];
        std::snprintf(name, sizeof name, "s%06zu_%s.%s", step, field.c_str(),
                      cfg_.snapshot_format == SnapshotFormat::csv ? "csv" : "f64");
        const std::string rel = std::string("snapshots/") + name;
        if (cfg_.snapshot_format == SnapshotFormat::csv) write_field_csv(f, dir_ / rel);
        else write_field_raw(f, dir_ / rel);
        snaps_.push_back({step, t, field, rel});
    }

    RunConfig cfg_;
    std::filesystem::path dir_;
    std::vector<SnapshotEntry> snaps_;
};

/// Runs a configuration end to end and writes every output. Hard violations are reported
/// through the result (and the manifest) rather than thrown, so the files always exist.
inline SimulationResult run_and_emit(const RunConfig& cfg) {
    RunWriter writer(cfg);
    const std::size_t final_step = cfg.horizon > 0.0 ? step_count(cfg.horizon, cfg.scheme.dt) : 0;
    SimulationOptions opts;
    opts.throw_on_hard_violation = false;
    opts.on_step = [&](const State& s, std::size_t step) {
        if (writer.due(step, final_step)) writer.snapshot(s, step);
    };
    const State initial = make_initial_state(cfg);
    SimulationResult r = simulate(initial, cfg.params, cfg.scheme, cfg.horizon, cfg.observers, opts);
    if (cfg.horizon == 0.0) writer.snapshot(initial, 0);
    else if (r.hard_violation) writer.snapshot(r.final_state, r.steps);
    writer.finish(r);
    return r;
}

/// Writes outputs for an already computed run whose snapshots are given explicitly.
inline void emit_outputs(const RunConfig& cfg, const SimulationResult& r,
                         const std::vector<std::pair<std::size_t, State>>& snapshots) {
    RunWriter writer(cfg);
    for (const auto& [step, s] : snapshots) writer.snapshot(s, step);
    writer.finish(r);
}

struct ReplayReport {
    std::size_t snapshots = 0;
    std::vector<Violation> violations;
    bool hard_violation = false;
    std::vector<SeriesRecord> series;
};

inline RunConfig read_manifest_config(const std::filesystem::path& dir) {
    nlohmann::json m;
    try {
        m = nlohmann::json::parse(output_detail::read_text(dir / "manifest.json"));
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::SchemaError, std::string("manifest.json: ") + e.what());
    }
    if (!m.contains("config") || !m["config"].is_object()) fail(ErrorKind::SchemaError, "manifest.json has no config");
    KeyValues kv;
    for (auto it = m["config"].begin(); it != m["config"].end(); ++it) kv[it.key()] = it.value().get<std::string>();
    return parse_config(kv);
}

/// Re-asserts the hard observers of a finished run against its stored snapshots.
/// Without configured hard observers the default hard set is used.
inline ReplayReport replay_snapshots(const std::filesystem::path& dir) {
    const RunConfig cfg = read_manifest_config(dir);
    std::vector<ObserverSpec> specs;
    for (const auto& o : cfg.observers)
        if (o.severity == Severity::hard) specs.push_back(o);
    if (specs.empty())
        for (auto k : {ObserverKind::max_principle, ObserverKind::positivity, ObserverKind::envelope})
            specs.push_back(default_observer(k));

    const State initial = make_initial_state(cfg);
    std::optional<Envelope> env;
    if (needs_envelope(specs) && cfg.horizon > 0.0) env = envelope_for(initial, cfg.params.beta, cfg.horizon);
    if (!env)
        std::erase_if(specs, [](const ObserverSpec& s) { return s.kind == ObserverKind::envelope || s.kind == ObserverKind::decay; });
    Monitor monitor(specs, ObservationContext::from_initial(initial, env ? &*env : nullptr));

    // index.csv rows are grouped by step; fields appear as theta, u1, ..., uN.
    std::ifstream in(dir / "snapshots" / "index.csv");
    if (!in) fail(ErrorKind::IoError, "cannot read " + (dir / "snapshots" / "index.csv").string());
    std::string line;
    std::getline(in, line);
    std::map<std::size_t, std::pair<double, std::map<std::string, std::string>>> steps;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto parts = config_detail::split(line, ',');
        if (parts.size() != 4) fail(ErrorKind::IoError, "malformed index line: " + line);
        auto& entry = steps[static_cast<std::size_t>(parse_double(parts[0]))];
        entry.first = parse_double(parts[1]);
        entry.second[parts[2]] = parts[3];
    }
    ReplayReport report;
    for (const auto& [step, entry] : steps) {
        auto load = [&](const std::string& field) {
            auto it = entry.second.find(field);
            if (it == entry.second.end())
                fail(ErrorKind::IoError, "snapshot step " + std::to_string(step) + " lacks " + field);
            const auto path = dir / it->second;
            return path.extension() == ".csv" ? read_field_csv(path) : read_field_raw(path);
        };
        State s{entry.first, load("theta"), {}};
        for (std::size_t i = 0; i < cfg.params.species(); ++i) s.u.push_back(load(species_name(i)));
        if (!(s.grid() == cfg.grid)) fail(ErrorKind::GridMismatch, "snapshot grid differs from the manifest grid");
        monitor.observe(s, step, true);
        ++report.snapshots;
    }
    report.violations = monitor.violations();
    report.hard_violation = monitor.first_hard_violation().has_value();
    report.series = monitor.series();
    return report;
}

} // namespace thermosmolu
