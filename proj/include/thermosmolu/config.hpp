#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "diagnostics.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "initial_data.hpp"
#include "kinetics.hpp"
#include "snapshot_io.hpp"
#include "timestepper.hpp"

namespace thermosmolu {

/// Fully qualified key -> raw value. Sorted, so serialization is deterministic.
using KeyValues = std::map<std::string, std::string>;

enum class SnapshotFormat { csv, raw };
enum class StudyKind { epsilon_sweep, dt_refinement, h_refinement, scheme_agreement };

inline std::string_view to_string(StudyKind k) {
    switch (k) {
    case StudyKind::epsilon_sweep: return "epsilon_sweep";
    case StudyKind::dt_refinement: return "dt_refinement";
    case StudyKind::h_refinement: return "h_refinement";
    case StudyKind::scheme_agreement: return "scheme_agreement";
    }
    return "?";
}

struct StudySettings {
    std::optional<StudyKind> kind;
    int levels = 3;
};

struct RunConfig {
    Grid grid = Grid::line(1.0, 101);
    ModelParams params;
    SchemeConfig scheme;
    bool dt_auto = true;
    double advisory_dt = std::numeric_limits<double>::infinity(); ///< at the initial state
    InitialSpec theta0;
    std::vector<InitialSpec> u0;
    std::vector<ObserverSpec> observers;
    double horizon = 1.0;
    std::string output_dir = "out";
    std::size_t snapshot_every = 0; ///< 0 = initial and final only
    SnapshotFormat snapshot_format = SnapshotFormat::csv;
    StudySettings study;
};

namespace config_detail {

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    for (std::string item; std::getline(ss, item, sep);) out.push_back(trim(item));
    if (!s.empty() && s.back() == sep) out.emplace_back();
    return out;
}

inline double to_number(const std::string& key, const std::string& v) {
    try {
        return parse_double(v);
    } catch (const Error&) {
        fail(ErrorKind::SchemaError, key + ": expected a number, got '" + v + "'");
    }
}

inline long long to_integer(const std::string& key, const std::string& v) {
    const double d = to_number(key, v);
    if (d != std::floor(d) || std::abs(d) > 1e15) fail(ErrorKind::SchemaError, key + ": expected an integer, got '" + v + "'");
    return static_cast<long long>(d);
}

inline bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "yes" || v == "on" || v == "1") return true;
    if (v == "false" || v == "no" || v == "off" || v == "0") return false;
    fail(ErrorKind::SchemaError, key + ": expected a boolean, got '" + v + "'");
}

inline std::vector<double> to_numbers(const std::string& key, const std::string& v) {
    std::vector<double> out;
    for (const auto& item : split(v, ',')) out.push_back(to_number(key, item));
    if (out.empty()) fail(ErrorKind::SchemaError, key + ": empty list");
    return out;
}

inline std::string join(const std::vector<double>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + format_double(v[i]);
    return s;
}

/// Expands a scalar to n copies; otherwise requires exactly n entries.
inline std::vector<double> broadcast(const std::string& key, std::vector<double> v, std::size_t n) {
    if (v.size() == 1) return std::vector<double>(n, v.front());
    if (v.size() != n)
        fail(ErrorKind::ConsistencyError, key + " has " + std::to_string(v.size()) + " entries, expected " +
                                              std::to_string(n));
    return v;
}

inline const std::set<std::string>& initial_fields() {
    static const std::set<std::string> f{"kind", "base", "amplitude", "mode", "center", "width", "seed", "max_mode"};
    return f;
}

inline const std::set<std::string>& observer_fields() {
    static const std::set<std::string> f{"stride", "severity", "tolerance", "relative_tolerance"};
    return f;
}

inline const std::set<std::string>& plain_keys() {
    static const std::set<std::string> k{
        "grid.dim", "grid.extents", "grid.cells",
        "model.species", "model.kappa", "model.kappa_i", "model.tau", "model.tau_i", "model.delta0",
        "model.epsilon", "model.n_clamp", "model.beta", "model.beta_matrix", "model.mollifier_extension",
        "model.mollifier_gradient",
        "scheme.kind", "scheme.dt", "scheme.picard_tol", "scheme.picard_max_iters", "scheme.linear_solve_tol",
        "scheme.clamp_negative",
        "run.T", "run.output_dir", "run.snapshot_every", "run.snapshot_format",
        "observers.list",
        "study.kind", "study.levels"};
    return k;
}

/// True for keys of the form initial.theta.<f>, initial.u.<f>, initial.u<k>.<f>, observers.<kind>.<f>.
inline bool is_known_key(const std::string& key) {
    if (plain_keys().count(key)) return true;
    const auto parts = split(key, '.');
    if (parts.size() == 3 && parts[0] == "initial" && initial_fields().count(parts[2])) {
        const std::string& who = parts[1];
        if (who == "theta" || who == "u") return true;
        if (who.size() > 1 && who[0] == 'u' &&
            std::all_of(who.begin() + 1, who.end(), [](char c) { return c >= '0' && c <= '9'; }))
            return true;
    }
    if (parts.size() == 3 && parts[0] == "observers" && observer_kind_from_string(parts[1]) &&
        observer_fields().count(parts[2]))
        return true;
    return false;
}

} // namespace config_detail

/// Reads "[section]" headers and "key = value" lines; '#' starts a comment.
/// Keys inside a section are prefixed with "section.".
inline KeyValues parse_key_values(std::string_view text) {
    using namespace config_detail;
    KeyValues kv;
    std::string section;
    std::stringstream in{std::string(text)};
    int lineno = 0;
    for (std::string raw; std::getline(in, raw);) {
        ++lineno;
        std::string line = trim(raw.substr(0, raw.find('#')));
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') fail(ErrorKind::SchemaError, "line " + std::to_string(lineno) + ": unterminated section");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            fail(ErrorKind::SchemaError, "line " + std::to_string(lineno) + ": expected 'key = value'");
        std::string key = trim(line.substr(0, eq));
        if (!section.empty()) key = section + "." + key;
        if (!is_known_key(key)) fail(ErrorKind::SchemaError, "unknown key '" + key + "'");
        if (!kv.emplace(key, trim(line.substr(eq + 1))).second)
            fail(ErrorKind::SchemaError, "duplicate key '" + key + "'");
    }
    return kv;
}

namespace config_detail {

inline InitialSpec parse_initial(const KeyValues& kv, const std::vector<std::string>& prefixes, const Grid& grid,
                                 InitialSpec spec) {
    auto get = [&](const std::string& field) -> std::optional<std::pair<std::string, std::string>> {
        for (const auto& p : prefixes) {
            auto it = kv.find(p + "." + field);
            if (it != kv.end()) return std::make_pair(it->first, it->second);
        }
        return std::nullopt;
    };
    if (auto v = get("kind")) {
        if (v->second == "constant") spec.kind = InitialKind::constant;
        else if (v->second == "cosine") spec.kind = InitialKind::cosine;
        else if (v->second == "gaussian") spec.kind = InitialKind::gaussian;
        else if (v->second == "random") spec.kind = InitialKind::random;
        else fail(ErrorKind::SchemaError, v->first + ": unknown initial kind '" + v->second + "'");
    }
    if (auto v = get("base")) spec.base = to_number(v->first, v->second);
    if (auto v = get("amplitude")) spec.amplitude = to_number(v->first, v->second);
    if (auto v = get("width")) {
        spec.width = to_number(v->first, v->second);
        if (!(spec.width > 0.0)) fail(ErrorKind::SchemaError, v->first + " must be positive");
    }
    if (auto v = get("seed")) spec.seed = static_cast<std::uint64_t>(to_integer(v->first, v->second));
    if (auto v = get("max_mode")) spec.max_mode = static_cast<int>(to_integer(v->first, v->second));
    if (auto v = get("mode")) {
        const auto m = broadcast(v->first, to_numbers(v->first, v->second), static_cast<std::size_t>(grid.dim()));
        for (int a = 0; a < 3; ++a) spec.mode[a] = a < grid.dim() ? static_cast<int>(m[a]) : 0;
    }
    if (auto v = get("center")) {
        const auto c = broadcast(v->first, to_numbers(v->first, v->second), static_cast<std::size_t>(grid.dim()));
        for (int a = 0; a < grid.dim(); ++a) spec.center[a] = c[a];
    }
    return spec;
}

inline void put_initial(KeyValues& kv, const std::string& prefix, const InitialSpec& s, int dim) {
    kv[prefix + ".kind"] = std::string(to_string(s.kind));
    kv[prefix + ".base"] = format_double(s.base);
    kv[prefix + ".amplitude"] = format_double(s.amplitude);
    std::vector<double> mode, center;
    for (int a = 0; a < dim; ++a) {
        mode.push_back(s.mode[a]);
        center.push_back(s.center[a]);
    }
    kv[prefix + ".mode"] = join(mode);
    kv[prefix + ".center"] = join(center);
    kv[prefix + ".width"] = format_double(s.width);
    kv[prefix + ".seed"] = std::to_string(s.seed);
    kv[prefix + ".max_mode"] = std::to_string(s.max_mode);
}

} // namespace config_detail

inline State make_initial_state(const RunConfig& c) {
    State s{0.0, make_field(c.grid, c.theta0), {}};
    for (const auto& spec : c.u0) s.u.push_back(make_field(c.grid, spec));
    return s;
}

/// Validated RunConfig from a key-value map, with documented defaults applied.
inline RunConfig parse_config(const KeyValues& kv) {
    using namespace config_detail;
    for (const auto& [k, v] : kv)
        if (!is_known_key(k)) fail(ErrorKind::SchemaError, "unknown key '" + k + "'");
    auto find = [&](const std::string& key) -> std::optional<std::string> {
        auto it = kv.find(key);
        if (it == kv.end()) return std::nullopt;
        return it->second;
    };
    RunConfig c;

    // grid
    const auto cells_raw = find("grid.cells");
    if (!cells_raw) fail(ErrorKind::SchemaError, "grid.cells is required");
    std::vector<double> cells_d = to_numbers("grid.cells", *cells_raw);
    std::vector<double> extents = find("grid.extents") ? to_numbers("grid.extents", *find("grid.extents"))
                                                       : std::vector<double>{1.0};
    std::size_t dim = std::max(cells_d.size(), extents.size());
    if (auto d = find("grid.dim")) dim = static_cast<std::size_t>(to_integer("grid.dim", *d));
    if (dim < 1 || dim > 3) fail(ErrorKind::SchemaError, "grid.dim must be 1, 2 or 3");
    cells_d = broadcast("grid.cells", cells_d, dim);
    extents = broadcast("grid.extents", extents, dim);
    std::vector<std::size_t> cells;
    for (double v : cells_d) {
        if (v != std::floor(v) || v < 0) fail(ErrorKind::SchemaError, "grid.cells must be non-negative integers");
        cells.push_back(static_cast<std::size_t>(v));
    }
    c.grid = Grid(extents, cells);

    // model
    std::optional<BetaMatrix> beta;
    std::optional<std::size_t> species;
    if (auto v = find("model.species")) {
        const long long n = to_integer("model.species", *v);
        if (n < 1) fail(ErrorKind::SchemaError, "model.species must be at least 1");
        species = static_cast<std::size_t>(n);
    }
    if (auto v = find("model.beta_matrix")) {
        if (find("model.beta")) fail(ErrorKind::SchemaError, "give either model.beta or model.beta_matrix, not both");
        std::vector<std::vector<double>> rows;
        for (const auto& row : split(*v, ';'))
            if (!row.empty()) rows.push_back(to_numbers("model.beta_matrix", row));
        beta = BetaMatrix::from_rows(rows);
        if (species && *species != beta->species())
            fail(ErrorKind::ConsistencyError, "model.beta_matrix is " + std::to_string(beta->species()) + "x" +
                                                  std::to_string(beta->species()) + " but model.species = " +
                                                  std::to_string(*species));
    } else if (auto b = find("model.beta")) {
        beta = BetaMatrix::constant(species.value_or(1), to_number("model.beta", *b));
    } else {
        fail(ErrorKind::SchemaError, "model.beta or model.beta_matrix is required");
    }
    const std::size_t n = beta->species();
    c.params.beta = *beta;
    if (auto v = find("model.kappa")) c.params.kappa = to_number("model.kappa", *v);
    c.params.kappa_i = broadcast("model.kappa_i", find("model.kappa_i") ? to_numbers("model.kappa_i", *find("model.kappa_i"))
                                                                        : std::vector<double>{1.0}, n);
    if (auto v = find("model.tau")) c.params.tau = to_number("model.tau", *v);
    c.params.tau_i = broadcast("model.tau_i", find("model.tau_i") ? to_numbers("model.tau_i", *find("model.tau_i"))
                                                                  : std::vector<double>{0.0}, n);
    if (auto v = find("model.delta0")) c.params.delta0 = to_number("model.delta0", *v);
    if (auto v = find("model.epsilon")) c.params.epsilon = to_number("model.epsilon", *v);
    if (auto v = find("model.n_clamp"); v && *v != "off") c.params.n_clamp = to_number("model.n_clamp", *v);
    if (auto v = find("model.mollifier_extension")) {
        if (*v == "reflect") c.params.mollifier.extension = Extension::reflect;
        else if (*v == "zero") c.params.mollifier.extension = Extension::zero;
        else fail(ErrorKind::SchemaError, "model.mollifier_extension must be reflect or zero");
    }
    if (auto v = find("model.mollifier_gradient")) {
        if (*v == "discrete") c.params.mollifier.gradient_mode = GradientMode::discrete;
        else if (*v == "analytic") c.params.mollifier.gradient_mode = GradientMode::analytic;
        else fail(ErrorKind::SchemaError, "model.mollifier_gradient must be discrete or analytic");
    }
    c.params.validate();

    // run
    const auto T = find("run.T");
    if (!T) fail(ErrorKind::SchemaError, "run.T is required");
    c.horizon = to_number("run.T", *T);
    if (!(c.horizon >= 0.0)) fail(ErrorKind::SchemaError, "run.T must be non-negative");
    if (auto v = find("run.output_dir")) c.output_dir = *v;
    if (auto v = find("run.snapshot_every")) {
        const long long s = to_integer("run.snapshot_every", *v);
        if (s < 0) fail(ErrorKind::SchemaError, "run.snapshot_every must be non-negative");
        c.snapshot_every = static_cast<std::size_t>(s);
    }
    if (auto v = find("run.snapshot_format")) {
        if (*v == "csv") c.snapshot_format = SnapshotFormat::csv;
        else if (*v == "raw") c.snapshot_format = SnapshotFormat::raw;
        else fail(ErrorKind::SchemaError, "run.snapshot_format must be csv or raw");
    }

    // initial data
    InitialSpec theta_default;
    theta_default.base = 1.0;
    c.theta0 = parse_initial(kv, {"initial.theta"}, c.grid, theta_default);
    InitialSpec u_default;
    u_default.base = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        const std::string own = "initial.u" + std::to_string(i + 1);
        InitialSpec s = parse_initial(kv, {own, "initial.u"}, c.grid, u_default);
        // A seed shared through [initial.u] is offset per species so random data differ between species.
        if (!kv.count(own + ".seed")) s.seed += i;
        c.u0.push_back(s);
    }
    for (const auto& [k, v] : kv) {
        const auto parts = split(k, '.');
        if (parts[0] == "initial" && parts[1].size() > 1 && parts[1][0] == 'u') {
            const auto idx = std::stoul(parts[1].substr(1));
            if (idx < 1 || idx > n)
                fail(ErrorKind::ConsistencyError, k + " refers to species " + std::to_string(idx) + " but there are " +
                                                      std::to_string(n));
        }
    }

    // scheme
    if (auto v = find("scheme.kind")) {
        if (*v == "imex") c.scheme.scheme = Scheme::imex;
        else if (*v == "picard") c.scheme.scheme = Scheme::picard;
        else fail(ErrorKind::SchemaError, "scheme.kind must be imex or picard");
    }
    if (auto v = find("scheme.picard_tol")) c.scheme.picard_tol = to_number("scheme.picard_tol", *v);
    if (auto v = find("scheme.picard_max_iters"))
        c.scheme.picard_max_iters = static_cast<int>(to_integer("scheme.picard_max_iters", *v));
    if (auto v = find("scheme.linear_solve_tol")) c.scheme.linear_solve_tol = to_number("scheme.linear_solve_tol", *v);
    if (auto v = find("scheme.clamp_negative")) c.scheme.clamp_negative = to_bool("scheme.clamp_negative", *v);
    {
        SchemeConfig probe = c.scheme;
        probe.dt = 1.0;
        Integrator it(c.grid, c.params, probe);
        c.advisory_dt = it.advisory(make_initial_state(c)).dt();
    }
    const auto dt = find("scheme.dt");
    if (dt && *dt != "auto") {
        c.dt_auto = false;
        c.scheme.dt = to_number("scheme.dt", *dt);
    } else {
        c.dt_auto = true;
        double d = 0.5 * c.advisory_dt;
        if (c.horizon > 0.0) d = std::min(d, c.horizon / 100.0);
        if (!std::isfinite(d) || !(d > 0.0)) d = 1e-3;
        c.scheme.dt = d;
    }
    c.scheme.validate();

    // observers
    std::vector<ObserverKind> kinds{ObserverKind::max_principle, ObserverKind::positivity, ObserverKind::envelope};
    if (auto v = find("observers.list")) {
        kinds.clear();
        if (*v != "none")
            for (const auto& name : split(*v, ',')) {
                auto k = observer_kind_from_string(name);
                if (!k) fail(ErrorKind::SchemaError, "observers.list: unknown observer '" + name + "'");
                kinds.push_back(*k);
            }
    }
    for (auto k : kinds) {
        ObserverSpec s = default_observer(k);
        const std::string p = "observers." + std::string(to_string(k)) + ".";
        if (auto v = find(p + "stride")) s.stride = static_cast<int>(to_integer(p + "stride", *v));
        if (auto v = find(p + "severity")) {
            if (*v == "hard") s.severity = Severity::hard;
            else if (*v == "soft") s.severity = Severity::soft;
            else fail(ErrorKind::SchemaError, p + "severity must be hard or soft");
        }
        if (auto v = find(p + "tolerance")) s.tolerance = to_number(p + "tolerance", *v);
        if (auto v = find(p + "relative_tolerance")) s.relative_tolerance = to_number(p + "relative_tolerance", *v);
        s.validate();
        c.observers.push_back(s);
    }
    for (const auto& [k, v] : kv) {
        const auto parts = split(k, '.');
        if (parts[0] == "observers" && parts.size() == 3 &&
            std::none_of(kinds.begin(), kinds.end(), [&](ObserverKind o) { return to_string(o) == parts[1]; }))
            fail(ErrorKind::ConsistencyError, k + " configures an observer that is not in observers.list");
    }

    // study
    if (auto v = find("study.kind")) {
        bool ok = false;
        for (auto k : {StudyKind::epsilon_sweep, StudyKind::dt_refinement, StudyKind::h_refinement,
                       StudyKind::scheme_agreement})
            if (*v == to_string(k)) {
                c.study.kind = k;
                ok = true;
            }
        if (!ok) fail(ErrorKind::SchemaError, "study.kind: unknown study '" + *v + "'");
    }
    if (auto v = find("study.levels")) {
        c.study.levels = static_cast<int>(to_integer("study.levels", *v));
        if (c.study.levels < 2) fail(ErrorKind::SchemaError, "study.levels must be at least 2");
    }
    return c;
}

inline RunConfig parse_config(std::string_view text) { return parse_config(parse_key_values(text)); }

/// Every effective parameter, including applied defaults and the resolved dt.
/// Feeding the result back through parse_config reproduces the configuration.
inline KeyValues to_key_values(const RunConfig& c) {
    using namespace config_detail;
    KeyValues kv;
    const int d = c.grid.dim();
    std::vector<double> extents, cells;
    for (int a = 0; a < d; ++a) {
        extents.push_back(c.grid.extent(a));
        cells.push_back(static_cast<double>(c.grid.cells(a)));
    }
    kv["grid.dim"] = std::to_string(d);
    kv["grid.extents"] = join(extents);
    kv["grid.cells"] = join(cells);

    const auto& p = c.params;
    kv["model.species"] = std::to_string(p.species());
    kv["model.kappa"] = format_double(p.kappa);
    kv["model.kappa_i"] = join(p.kappa_i);
    kv["model.tau"] = format_double(p.tau);
    kv["model.tau_i"] = join(p.tau_i);
    kv["model.delta0"] = format_double(p.delta0);
    kv["model.epsilon"] = format_double(p.epsilon);
    kv["model.n_clamp"] = p.n_clamp ? format_double(*p.n_clamp) : "off";
    std::string rows;
    for (const auto& r : p.beta.rows()) rows += (rows.empty() ? "" : "; ") + join(r);
    kv["model.beta_matrix"] = rows;
    kv["model.mollifier_extension"] = p.mollifier.extension == Extension::reflect ? "reflect" : "zero";
    kv["model.mollifier_gradient"] = p.mollifier.gradient_mode == GradientMode::discrete ? "discrete" : "analytic";

    kv["scheme.kind"] = std::string(to_string(c.scheme.scheme));
    kv["scheme.dt"] = format_double(c.scheme.dt);
    kv["scheme.picard_tol"] = format_double(c.scheme.picard_tol);
    kv["scheme.picard_max_iters"] = std::to_string(c.scheme.picard_max_iters);
    kv["scheme.linear_solve_tol"] = format_double(c.scheme.linear_solve_tol);
    kv["scheme.clamp_negative"] = c.scheme.clamp_negative ? "true" : "false";

    kv["run.T"] = format_double(c.horizon);
    kv["run.output_dir"] = c.output_dir;
    kv["run.snapshot_every"] = std::to_string(c.snapshot_every);
    kv["run.snapshot_format"] = c.snapshot_format == SnapshotFormat::csv ? "csv" : "raw";

    put_initial(kv, "initial.theta", c.theta0, d);
    for (std::size_t i = 0; i < c.u0.size(); ++i) put_initial(kv, "initial.u" + std::to_string(i + 1), c.u0[i], d);

    std::string list;
    for (const auto& o : c.observers) {
        list += (list.empty() ? "" : ", ") + std::string(to_string(o.kind));
        const std::string pre = "observers." + std::string(to_string(o.kind)) + ".";
        kv[pre + "stride"] = std::to_string(o.stride);
        kv[pre + "severity"] = std::string(to_string(o.severity));
        kv[pre + "tolerance"] = format_double(o.tolerance);
        kv[pre + "relative_tolerance"] = format_double(o.relative_tolerance);
    }
    kv["observers.list"] = list.empty() ? "none" : list;
    if (c.study.kind) kv["study.kind"] = std::string(to_string(*c.study.kind));
    kv["study.levels"] = std::to_string(c.study.levels);
    return kv;
}

/// Renders key-values as a config document that parse_key_values accepts.
inline std::string render_key_values(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

} // namespace thermosmolu
