#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <functional>
#include <numbers>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "config.hpp"
#include "diagnostics.hpp"
#include "simulation.hpp"

namespace thermosmolu {

struct StudySpec {
    StudyKind kind = StudyKind::dt_refinement;
    int levels = 3;
    RunConfig base;

    void validate() const {
        if (levels < 2) fail(ErrorKind::SchemaError, "study levels must be at least 2");
        if (kind == StudyKind::epsilon_sweep && !(base.params.epsilon > 0.0))
            fail(ErrorKind::SchemaError, "epsilon_sweep needs a positive base epsilon");
    }
};

/// Builds a StudySpec from the study.* keys of a parsed configuration.
inline StudySpec study_from_config(const RunConfig& c) {
    if (!c.study.kind) fail(ErrorKind::SchemaError, "study.kind is required for a study");
    StudySpec s{*c.study.kind, c.study.levels, c};
    s.validate();
    return s;
}

struct StudyLevel {
    int level = 0;
    double parameter = 0.0; ///< dt, h or epsilon depending on the study
    std::optional<double> error_vs_reference;
    std::optional<double> difference_to_previous;
    std::size_t soft_violations = 0;
    bool hard_violation = false;
    std::string note;
};

struct StudyReport {
    StudyKind kind = StudyKind::dt_refinement;
    std::string reference; ///< analytic, successive, epsilon_zero or imex_vs_picard
    std::vector<StudyLevel> levels;
    std::optional<double> observed_order;
};

/// Worker count for study jobs: THERMOSMOLU_THREADS when set, else the hardware concurrency.
inline unsigned study_threads() {
    if (const char* env = std::getenv("THERMOSMOLU_THREADS"); env && *env) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (*end != '\0' || v < 1) fail(ErrorKind::SchemaError, "THERMOSMOLU_THREADS must be a positive integer");
        return static_cast<unsigned>(v);
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs independent jobs on at most `threads` workers. The first exception (in job order) is rethrown.
inline void run_jobs(std::vector<std::function<void()>>& jobs, unsigned threads) {
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            try {
                jobs[j]();
            } catch (...) {
                errors[j] = std::current_exception();
            }
        }
    };
    const unsigned n = std::min<unsigned>(threads, static_cast<unsigned>(jobs.size()));
    if (n <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

/// A run sampled at the coarse time levels and restricted to the coarse nodes.
/// Each sample concatenates theta and every u_i.
struct Trajectory {
    std::vector<double> times;
    std::vector<std::vector<double>> samples;
    std::size_t soft_violations = 0;
    bool hard_violation = false;
};

namespace study_detail {

/// Flat fine-grid index of every coarse node when each axis is refined by `factor`.
inline std::vector<std::size_t> restriction_map(const Grid& coarse, const Grid& fine, std::size_t factor) {
    std::vector<std::size_t> map(coarse.points());
    for (std::size_t p = 0; p < coarse.points(); ++p) {
        auto idx = coarse.indices(p);
        for (int a = 0; a < coarse.dim(); ++a) idx[a] *= factor;
        map[p] = fine.flat(idx);
    }
    return map;
}

inline Grid refine(const Grid& g, std::size_t factor) {
    std::vector<double> e;
    std::vector<std::size_t> c;
    for (int a = 0; a < g.dim(); ++a) {
        e.push_back(g.extent(a));
        c.push_back((g.cells(a) - 1) * factor + 1);
    }
    return Grid(e, c);
}

inline std::vector<double> sample(const State& s, const std::vector<std::size_t>& map) {
    std::vector<double> out;
    out.reserve(map.size() * (1 + s.u.size()));
    for (std::size_t p : map) out.push_back(s.theta[p]);
    for (const auto& ui : s.u)
        for (std::size_t p : map) out.push_back(ui[p]);
    return out;
}

/// Runs `cfg` and keeps every `stride`-th step plus the final one, restricted through `map`.
inline Trajectory run_sampled(const RunConfig& cfg, std::size_t stride, const std::vector<std::size_t>& map) {
    Trajectory tr;
    const std::size_t n = step_count(cfg.horizon, cfg.scheme.dt);
    SimulationOptions opts;
    opts.throw_on_hard_violation = false;
    opts.on_step = [&](const State& s, std::size_t k) {
        if (k % stride == 0 || k == n) {
            tr.times.push_back(s.t);
            tr.samples.push_back(sample(s, map));
        }
    };
    const SimulationResult r = simulate(make_initial_state(cfg), cfg.params, cfg.scheme, cfg.horizon, cfg.observers, opts);
    if (r.steps != n && !r.hard_violation) fail(ErrorKind::ConsistencyError, "study run stopped early");
    for (const auto& v : r.violations)
        if (v.severity == Severity::soft) ++tr.soft_violations;
    tr.hard_violation = r.hard_violation.has_value();
    return tr;
}

/// Discrete L2(Q(T)) norm of a - b: trapezoid in time, grid quadrature in space, summed over components.
inline double l2_difference(const Trajectory& a, const Trajectory& b, const Grid& coarse) {
    if (a.times.size() != b.times.size())
        fail(ErrorKind::ConsistencyError, "study levels do not share the coarse time sampling");
    const auto w = coarse.quadrature_weights();
    const std::size_t np = w.size();
    std::vector<double> spatial(a.times.size());
    for (std::size_t k = 0; k < a.times.size(); ++k) {
        if (std::abs(a.times[k] - b.times[k]) > 1e-9 * std::max(1.0, std::abs(a.times[k])))
            fail(ErrorKind::ConsistencyError, "study levels sample different times");
        double s = 0.0;
        for (std::size_t q = 0; q < a.samples[k].size(); ++q) {
            const double d = a.samples[k][q] - b.samples[k][q];
            s += w[q % np] * d * d;
        }
        spatial[k] = s;
    }
    if (spatial.size() == 1) return std::sqrt(spatial[0]);
    double total = 0.0;
    for (std::size_t k = 1; k < spatial.size(); ++k)
        total += 0.5 * (a.times[k] - a.times[k - 1]) * (spatial[k] + spatial[k - 1]);
    return std::sqrt(total);
}

/// True when every field solves a decoupled heat equation with a closed-form solution.
inline bool has_analytic_reference(const RunConfig& c) {
    if (c.params.beta.beta0() != 0.0 || c.params.tau != 0.0) return false;
    for (double t : c.params.tau_i)
        if (t != 0.0) return false;
    auto ok = [](const InitialSpec& s) { return s.kind == InitialKind::constant || s.kind == InitialKind::cosine; };
    return ok(c.theta0) && std::all_of(c.u0.begin(), c.u0.end(), ok);
}

inline double heat_solution(const InitialSpec& s, double kappa, const Grid& g, std::size_t p, double t) {
    if (s.kind == InitialKind::constant) return s.base;
    using std::numbers::pi;
    const auto x = g.position(p);
    double rate = 0.0, shape = 1.0;
    for (int a = 0; a < g.dim(); ++a) {
        const double k = s.mode[a] * pi / g.extent(a);
        rate += k * k;
        shape *= std::cos(k * x[a]);
    }
    return s.base + s.amplitude * std::exp(-kappa * rate * t) * shape;
}

inline Trajectory analytic_trajectory(const RunConfig& c, const Grid& coarse, const std::vector<double>& times) {
    Trajectory tr;
    tr.times = times;
    for (double t : times) {
        std::vector<double> v;
        for (std::size_t p = 0; p < coarse.points(); ++p) v.push_back(heat_solution(c.theta0, c.params.kappa, coarse, p, t));
        for (std::size_t i = 0; i < c.u0.size(); ++i)
            for (std::size_t p = 0; p < coarse.points(); ++p)
                v.push_back(heat_solution(c.u0[i], c.params.kappa_i[i], coarse, p, t));
        tr.samples.push_back(std::move(v));
    }
    return tr;
}

inline std::optional<double> order_from(const std::vector<double>& params, const std::vector<double>& values) {
    return thermosmolu::detail::loglog_slope(params, values);
}

} // namespace study_detail

/// Executes the level runs of a study concurrently and reports differences and the observed order.
///
///   dt_refinement:    dt / 2^l on the base grid
///   h_refinement:     grid refined by 2^l per axis with dt / 4^l
///   epsilon_sweep:    epsilon / 2^l, each compared with the previous level and with epsilon = 0
///   scheme_agreement: dt / 2^l, IMEX against Picard at each level
inline StudyReport run_study(const StudySpec& spec) {
    using namespace study_detail;
    spec.validate();
    const RunConfig& base = spec.base;
    const Grid& coarse = base.grid;
    const auto L = static_cast<std::size_t>(spec.levels);
    StudyReport report;
    report.kind = spec.kind;

    std::vector<RunConfig> cfgs;
    std::vector<std::size_t> strides;
    std::vector<std::vector<std::size_t>> maps;
    std::vector<double> params;
    const auto identity = restriction_map(coarse, coarse, 1);
    for (std::size_t l = 0; l < L; ++l) {
        RunConfig c = base;
        const double f = std::ldexp(1.0, static_cast<int>(l));
        switch (spec.kind) {
        case StudyKind::dt_refinement:
        case StudyKind::scheme_agreement:
            c.scheme.dt = base.scheme.dt / f;
            strides.push_back(std::size_t{1} << l);
            maps.push_back(identity);
            params.push_back(c.scheme.dt);
            break;
        case StudyKind::h_refinement:
            c.grid = refine(coarse, std::size_t{1} << l);
            c.scheme.dt = base.scheme.dt / (f * f);
            strides.push_back(std::size_t{1} << (2 * l));
            maps.push_back(restriction_map(coarse, c.grid, std::size_t{1} << l));
            params.push_back(c.grid.max_spacing());
            break;
        case StudyKind::epsilon_sweep:
            c.params.epsilon = base.params.epsilon / f;
            strides.push_back(1);
            maps.push_back(identity);
            params.push_back(c.params.epsilon);
            break;
        }
        cfgs.push_back(std::move(c));
    }

    // Job list: one per level, plus the paired run for the comparison-based studies.
    std::vector<Trajectory> runs(L);
    std::vector<Trajectory> partner(L);
    std::optional<Trajectory> eps_zero;
    std::vector<std::function<void()>> jobs;
    for (std::size_t l = 0; l < L; ++l)
        jobs.emplace_back([&, l] { runs[l] = run_sampled(cfgs[l], strides[l], maps[l]); });
    if (spec.kind == StudyKind::scheme_agreement) {
        for (std::size_t l = 0; l < L; ++l)
            jobs.emplace_back([&, l] {
                RunConfig c = cfgs[l];
                c.scheme.scheme = c.scheme.scheme == Scheme::imex ? Scheme::picard : Scheme::imex;
                partner[l] = run_sampled(c, strides[l], maps[l]);
            });
    }
    if (spec.kind == StudyKind::epsilon_sweep) {
        eps_zero.emplace();
        jobs.emplace_back([&] {
            RunConfig c = base;
            c.params.epsilon = 0.0;
            *eps_zero = run_sampled(c, 1, identity);
        });
    }
    run_jobs(jobs, study_threads());

    std::optional<Trajectory> analytic;
    if ((spec.kind == StudyKind::dt_refinement || spec.kind == StudyKind::h_refinement) && has_analytic_reference(base))
        analytic = analytic_trajectory(base, coarse, runs[0].times);

    // A run stopped by a hard violation has a truncated sampling and is left out of every comparison.
    auto compare = [&](const Trajectory& a, const Trajectory& b) -> std::optional<double> {
        if (a.hard_violation || b.hard_violation) return std::nullopt;
        return l2_difference(a, b, coarse);
    };
    std::vector<double> order_x, order_y;
    for (std::size_t l = 0; l < L; ++l) {
        StudyLevel lv;
        lv.level = static_cast<int>(l);
        lv.parameter = params[l];
        lv.soft_violations = runs[l].soft_violations;
        lv.hard_violation = runs[l].hard_violation;
        if (l > 0) lv.difference_to_previous = compare(runs[l], runs[l - 1]);
        if (analytic) lv.error_vs_reference = compare(runs[l], *analytic);
        if (spec.kind == StudyKind::scheme_agreement) {
            lv.error_vs_reference = compare(runs[l], partner[l]);
            lv.soft_violations += partner[l].soft_violations;
            lv.hard_violation = lv.hard_violation || partner[l].hard_violation;
        }
        if (spec.kind == StudyKind::epsilon_sweep) lv.error_vs_reference = compare(runs[l], *eps_zero);
        if (lv.hard_violation) lv.note = "hard invariant violation";
        else if (lv.soft_violations) lv.note = "soft observer flagged";
        report.levels.push_back(lv);
    }

    if (analytic || spec.kind == StudyKind::scheme_agreement) {
        report.reference = analytic ? "analytic" : "imex_vs_picard";
        for (const auto& lv : report.levels)
            if (lv.error_vs_reference) order_x.push_back(lv.parameter), order_y.push_back(*lv.error_vs_reference);
    } else {
        report.reference = spec.kind == StudyKind::epsilon_sweep ? "epsilon_zero" : "successive";
        // Successive differences d_l = |q_l - q_{l-1}| scale with the coarser parameter.
        for (std::size_t l = 1; l < L; ++l)
            if (report.levels[l].difference_to_previous) {
                order_x.push_back(params[l - 1]);
                order_y.push_back(*report.levels[l].difference_to_previous);
            }
    }
    report.observed_order = order_from(order_x, order_y);
    return report;
}

} // namespace thermosmolu
