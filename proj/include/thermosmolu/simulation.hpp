#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <vector>

#include "diagnostics.hpp"
#include "kinetics.hpp"
#include "timestepper.hpp"

namespace thermosmolu {

struct PicardStepStats {
    int iterations = 0;
    double final_residual = 0.0;
    double max_ratio = 0.0; ///< max r_{k+1} / r_k over the step (0 with a single iteration)
};

/// Residual ratios below this absolute floor are roundoff and are not reported.
inline constexpr double picard_ratio_floor = 1e-14;

inline double max_contraction_ratio(const std::vector<double>& residuals) {
    double m = 0.0;
    for (std::size_t k = 1; k < residuals.size(); ++k)
        if (residuals[k - 1] > 0.0 && residuals[k] > picard_ratio_floor)
            m = std::max(m, residuals[k] / residuals[k - 1]);
    return m;
}

struct SimulationOptions {
    bool throw_on_hard_violation = true;
    /// Called after the initial state (step 0) and after every step.
    std::function<void(const State&, std::size_t step)> on_step;
    /// Envelope RK4 step; 0 selects the default for the beta matrix.
    double envelope_dt = 0.0;
};

struct SimulationResult {
    State final_state;
    std::size_t steps = 0;
    std::vector<SeriesRecord> series;
    std::vector<Violation> violations;
    std::optional<Violation> hard_violation;
    std::vector<PicardStepStats> picard;
    std::vector<std::pair<Diagnostic, std::size_t>> warnings;
    std::optional<Envelope> envelope;
};

inline bool needs_envelope(const std::vector<ObserverSpec>& observers) {
    return std::any_of(observers.begin(), observers.end(), [](const ObserverSpec& o) {
        return o.kind == ObserverKind::envelope || o.kind == ObserverKind::decay;
    });
}

inline Envelope envelope_for(const State& initial, const BetaMatrix& beta, double horizon, double dt = 0.0) {
    std::vector<double> y0;
    for (const auto& ui : initial.u) y0.push_back(std::max(0.0, ui.max()));
    return solve_envelope(beta, y0, horizon, dt > 0.0 ? dt : default_envelope_step(beta));
}

/// Number of steps of size dt needed to reach T; the last one may be shorter.
inline std::size_t step_count(double horizon, double dt) {
    return static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
}

/// Runs the scheme from `initial` up to `horizon`, observing per stride and always at the end.
inline SimulationResult simulate(const State& initial, const ModelParams& params, const SchemeConfig& cfg,
                                 double horizon, const std::vector<ObserverSpec>& observers,
                                 const SimulationOptions& options = {}) {
    if (!(horizon >= 0.0)) fail(ErrorKind::SchemaError, "horizon must be non-negative");
    Integrator integrator(initial.grid(), params, cfg);
    SimulationResult result{initial, 0, {}, {}, {}, {}, {}, {}};
    if (horizon == 0.0) {
        result.warnings = integrator.warnings();
        return result;
    }
    if (needs_envelope(observers))
        result.envelope = envelope_for(initial, params.beta, horizon, options.envelope_dt);

    Monitor monitor(observers, ObservationContext::from_initial(initial, result.envelope ? &*result.envelope : nullptr));
    auto check = [&](const State& s, std::size_t step, bool last) {
        bool hard = monitor.observe(s, step, last);
        if (options.on_step) options.on_step(s, step);
        if (hard && !result.hard_violation) result.hard_violation = monitor.first_hard_violation();
        return hard;
    };

    const std::size_t n = step_count(horizon, cfg.dt);
    State state = initial;
    bool stop = check(state, 0, false);
    for (std::size_t k = 1; k <= n && !stop; ++k) {
        const double t_next = k == n ? horizon : static_cast<double>(k) * cfg.dt;
        const double dt = t_next - state.t;
        if (cfg.scheme == Scheme::imex) {
            state = integrator.step_imex(state, dt);
        } else {
            PicardResult r = integrator.step_picard(state, dt);
            result.picard.push_back({r.iterations, r.final_residual, max_contraction_ratio(r.residuals)});
            state = std::move(r.state);
        }
        state.t = t_next;
        result.steps = k;
        stop = check(state, k, k == n);
    }

    result.final_state = std::move(state);
    result.series = monitor.series();
    result.violations = monitor.violations();
    result.warnings = integrator.warnings();
    if (result.hard_violation && options.throw_on_hard_violation) {
        const auto& v = *result.hard_violation;
        fail(ErrorKind::InvariantViolation, std::string(to_string(v.kind)) + " observer: " + v.quantity + " margin " +
                                                std::to_string(v.margin) + " exceeds " + std::to_string(v.threshold) +
                                                " at t = " + std::to_string(v.t));
    }
    return result;
}

} // namespace thermosmolu
