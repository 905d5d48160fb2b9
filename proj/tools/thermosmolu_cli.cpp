#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "thermosmolu/thermosmolu.hpp"

namespace ts = thermosmolu;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) ts::fail(ts::ErrorKind::IoError, "cannot read " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void print_warnings(const std::vector<std::pair<ts::Diagnostic, std::size_t>>& warnings) {
    for (const auto& [d, n] : warnings) std::cerr << "warning: " << d.code << " (" << n << "x): " << d.message << "\n";
}

void print_violation(const ts::Violation& v) {
    std::cerr << "violation: " << ts::to_string(v.kind) << " [" << ts::to_string(v.severity) << "] " << v.quantity
              << " margin " << ts::format_double(v.margin) << " > " << ts::format_double(v.threshold) << " at t = "
              << ts::format_double(v.t) << "\n";
}

struct SimulateArgs {
    std::string config;
    std::string scheme;
    std::string dt;
    std::string horizon;
    std::string snapshot_every;
    std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
    ts::KeyValues kv = ts::parse_key_values(read_file(a.config));
    if (!a.scheme.empty()) kv["scheme.kind"] = a.scheme;
    if (!a.dt.empty()) kv["scheme.dt"] = a.dt;
    if (!a.horizon.empty()) kv["run.T"] = a.horizon;
    if (!a.snapshot_every.empty()) kv["run.snapshot_every"] = a.snapshot_every;
    if (!a.out.empty()) kv["run.output_dir"] = a.out;
    const ts::RunConfig cfg = ts::parse_config(kv);

    const ts::SimulationResult r = ts::run_and_emit(cfg);
    print_warnings(r.warnings);
    std::cout << "problem " << ts::to_string(cfg.params.problem()) << ", scheme " << ts::to_string(cfg.scheme.scheme)
              << ", dt " << ts::format_double(cfg.scheme.dt) << " (advisory " << ts::format_double(cfg.advisory_dt)
              << "), " << r.steps << " steps to t = " << ts::format_double(r.final_state.t) << "\n";
    std::cout << "outputs in " << cfg.output_dir << "\n";
    for (const auto& v : r.violations)
        if (v.severity == ts::Severity::soft) print_violation(v);
    if (r.hard_violation) {
        print_violation(*r.hard_violation);
        return ts::exit_code(ts::ErrorKind::InvariantViolation);
    }
    return 0;
}

struct EnvelopeArgs {
    std::string config;
    double beta = 1.0;
    std::size_t species = 1;
    std::vector<double> y0;
    double horizon = 1.0;
    double dt = 0.0;
    double every = 0.0;
};

int cmd_envelope(const EnvelopeArgs& a) {
    ts::BetaMatrix beta = ts::BetaMatrix::constant(a.species, a.beta);
    std::vector<double> y0 = a.y0;
    double horizon = a.horizon;
    if (!a.config.empty()) {
        const ts::RunConfig cfg = ts::parse_config(read_file(a.config));
        beta = cfg.params.beta;
        horizon = cfg.horizon;
        if (y0.empty()) {
            const ts::State s = ts::make_initial_state(cfg);
            for (const auto& ui : s.u) y0.push_back(std::max(0.0, ui.max()));
        }
    }
    if (y0.empty()) y0.assign(beta.species(), 1.0);
    if (y0.size() == 1 && beta.species() > 1) y0.assign(beta.species(), y0.front());
    const double dt = a.dt > 0.0 ? a.dt : ts::default_envelope_step(beta);
    const ts::Envelope env = ts::solve_envelope(beta, y0, horizon, dt);

    std::cout << "t";
    for (std::size_t i = 0; i < beta.species(); ++i) std::cout << ",y" << i + 1;
    std::cout << "\n";
    const double every = a.every > 0.0 ? a.every : horizon / 100.0;
    const auto n = every > 0.0 ? static_cast<std::size_t>(std::floor(horizon / every + 1e-9)) : 0;
    for (std::size_t k = 0; k <= n; ++k) {
        const double t = k == n ? horizon : static_cast<double>(k) * every;
        const auto y = env.at(t);
        std::cout << ts::format_double(t);
        for (double v : y) std::cout << "," << ts::format_double(v);
        std::cout << "\n";
        if (every == 0.0) break;
    }
    std::cerr << "y_inf_bound";
    for (double b : env.y_inf_bound()) std::cerr << " " << ts::format_double(b);
    std::cerr << ", c_star " << ts::format_double(env.c_star()) << "\n";
    return 0;
}

struct KernelArgs {
    double delta = 0.1;
    std::vector<double> extents{1.0};
    std::vector<std::size_t> cells{101};
    std::string extension = "reflect";
    std::string gradient = "discrete";
    int trials = 20;
    std::uint64_t seed = 1;
};

int cmd_kernel_table(const KernelArgs& a) {
    std::vector<double> extents = a.extents;
    if (extents.size() == 1 && a.cells.size() > 1) extents.assign(a.cells.size(), extents.front());
    const ts::Grid grid(extents, a.cells);
    ts::KernelOptions opts;
    opts.extension = a.extension == "zero" ? ts::Extension::zero : ts::Extension::reflect;
    opts.gradient_mode = a.gradient == "analytic" ? ts::GradientMode::analytic : ts::GradientMode::discrete;
    const ts::MollifierKernel k = ts::build_kernel(a.delta, grid, opts);
    for (const auto& w : k.warnings) std::cerr << "warning: " << w.code << ": " << w.message << "\n";

    const ts::MollifierRatios r = ts::measure_mollifier_constants(k, grid, a.trials, a.seed);
    std::cout << "quantity,value\n"
              << "grid," << grid.describe() << "\n"
              << "delta," << ts::format_double(k.delta) << "\n"
              << "support_radius_cells," << k.support_radius_cells[0] << "\n"
              << "taps," << k.taps.size() << "\n"
              << "cm," << ts::format_double(k.cm) << "\n"
              << "raw_mass," << ts::format_double(k.raw_mass) << "\n"
              << "weight_sum_minus_one," << ts::format_double(k.weight_sum() - 1.0) << "\n"
              << "grad_l2_over_l2," << ts::format_double(r.grad_l2_over_l2) << "\n"
              << "grad_linf_over_l2," << ts::format_double(r.grad_linf_over_l2) << "\n"
              << "grad_l2_ratio," << ts::format_double(r.grad_l2_ratio) << "\n"
              << "grad_l4_ratio," << ts::format_double(r.grad_l4_ratio) << "\n"
              << "smooth_l2_ratio," << ts::format_double(r.smooth_l2_ratio) << "\n";
    return 0;
}

int cmd_invariants(const std::string& dir) {
    const ts::ReplayReport r = ts::replay_snapshots(dir);
    for (const auto& v : r.violations) print_violation(v);
    std::cout << "replayed " << r.snapshots << " snapshots, " << r.violations.size() << " violations\n";
    return r.hard_violation ? ts::exit_code(ts::ErrorKind::InvariantViolation) : 0;
}

struct StudyArgs {
    std::string config;
    std::string kind;
    int levels = 0;
    std::string out;
};

int cmd_study(const StudyArgs& a) {
    ts::KeyValues kv = ts::parse_key_values(read_file(a.config));
    if (!a.kind.empty()) kv["study.kind"] = a.kind;
    if (a.levels > 0) kv["study.levels"] = std::to_string(a.levels);
    const ts::RunConfig cfg = ts::parse_config(kv);
    const ts::StudySpec spec = ts::study_from_config(cfg);
    const ts::StudyReport r = ts::run_study(spec);

    nlohmann::json j;
    j["kind"] = std::string(ts::to_string(r.kind));
    j["reference"] = r.reference;
    j["observed_order"] = r.observed_order ? nlohmann::json(*r.observed_order) : nlohmann::json(nullptr);
    j["config"] = ts::to_key_values(cfg);
    std::cout << "level,parameter,error_vs_reference,difference_to_previous,note\n";
    for (const auto& lv : r.levels) {
        auto opt = [](const std::optional<double>& v) { return v ? ts::format_double(*v) : std::string(); };
        std::cout << lv.level << "," << ts::format_double(lv.parameter) << "," << opt(lv.error_vs_reference) << ","
                  << opt(lv.difference_to_previous) << "," << lv.note << "\n";
        auto num = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
        nlohmann::json level;
        level["level"] = lv.level;
        level["parameter"] = lv.parameter;
        level["error_vs_reference"] = num(lv.error_vs_reference);
        level["difference_to_previous"] = num(lv.difference_to_previous);
        level["soft_violations"] = lv.soft_violations;
        level["hard_violation"] = lv.hard_violation;
        j["levels"].push_back(level);
    }
    std::cout << "reference " << r.reference << ", observed order "
              << (r.observed_order ? ts::format_double(*r.observed_order) : std::string("n/a")) << "\n";
    const std::string out = a.out.empty() ? cfg.output_dir : a.out;
    std::filesystem::create_directories(out);
    std::ofstream f(std::filesystem::path(out) / "study.json");
    if (!f) ts::fail(ts::ErrorKind::IoError, "cannot write study.json in " + out);
    f << j.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Thermo-diffusion and coagulation solver with invariant monitoring"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* s = app.add_subcommand("simulate", "Run one configuration and write manifest, series and snapshots");
    s->add_option("--config", sim.config, "Configuration file")->required();
    s->add_option("--scheme", sim.scheme, "imex or picard");
    s->add_option("--dt", sim.dt, "Time step, or 'auto'");
    s->add_option("--T", sim.horizon, "Final time");
    s->add_option("--snapshot-every", sim.snapshot_every, "Snapshot stride in steps (0 = first and last)");
    s->add_option("--out", sim.out, "Output directory");

    EnvelopeArgs env;
    auto* e = app.add_subcommand("envelope", "Tabulate the comparison ODE solution y(t)");
    e->add_option("--config", env.config, "Take beta, T and y(0) from a configuration");
    e->add_option("--beta", env.beta, "Constant coagulation rate");
    e->add_option("--species", env.species, "Number of species");
    e->add_option("--y0", env.y0, "Initial values (one, or one per species)")->delimiter(',');
    e->add_option("--T", env.horizon, "Horizon");
    e->add_option("--dt", env.dt, "RK4 step (default 1e-3 / max(1, beta_max))");
    e->add_option("--every", env.every, "Output interval (default T / 100)");

    KernelArgs ker;
    auto* k = app.add_subcommand("kernel-table", "Report the discrete mollifier and its measured constants");
    k->add_option("--delta", ker.delta, "Mollifier radius");
    k->add_option("--extents", ker.extents, "Box extents")->delimiter(',');
    k->add_option("--cells", ker.cells, "Nodes per axis")->delimiter(',');
    k->add_option("--extension", ker.extension, "reflect or zero")->check(CLI::IsMember({"reflect", "zero"}));
    k->add_option("--gradient", ker.gradient, "discrete or analytic")->check(CLI::IsMember({"discrete", "analytic"}));
    k->add_option("--trials", ker.trials, "Random fields per measurement");
    k->add_option("--seed", ker.seed, "Random seed");

    std::string inv_dir;
    auto* i = app.add_subcommand("invariants", "Replay a run directory and re-assert the hard observers");
    i->add_option("--dir", inv_dir, "Run output directory")->required();

    StudyArgs st;
    auto* y = app.add_subcommand("study", "Run a convergence or epsilon study");
    y->add_option("--config", st.config, "Base configuration")->required();
    y->add_option("--kind", st.kind, "epsilon_sweep, dt_refinement, h_refinement or scheme_agreement");
    y->add_option("--levels", st.levels, "Number of levels (>= 2)");
    y->add_option("--out", st.out, "Directory for study.json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int rc = app.exit(err);
        return rc == 0 ? 0 : ts::exit_code(ts::ErrorKind::SchemaError);
    }

    try {
        if (*s) return cmd_simulate(sim);
        if (*e) return cmd_envelope(env);
        if (*k) return cmd_kernel_table(ker);
        if (*i) return cmd_invariants(inv_dir);
        if (*y) return cmd_study(st);
    } catch (const ts::Error& err) {
        std::cerr << "error: " << err.what() << "\n";
        return ts::exit_code(err.kind());
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 1;
}
