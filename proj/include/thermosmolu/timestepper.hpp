#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "kinetics.hpp"
#include "linear_solve.hpp"
#include "mollifier.hpp"

namespace thermosmolu {

enum class Problem {
    P,          ///< un-mollified grad theta in the species equations, exact reaction
    P_eps,      ///< mollified grad theta, exact reaction
    P_eps_n,    ///< mollified grad theta, truncated reaction
    P_n,        ///< un-mollified grad theta, truncated reaction
};

inline std::string_view to_string(Problem p) {
    switch (p) {
    case Problem::P: return "P";
    case Problem::P_eps: return "P_eps";
    case Problem::P_eps_n: return "P_eps_n";
    case Problem::P_n: return "P_n";
    }
    return "?";
}

/// Physical and regularization constants of the coupled system
///
///   theta_t - kappa Lap theta - tau sum_i grad^{delta0} u_i . grad theta = 0
///   u_it - kappa_i Lap u_i - tau_i grad^{eps} theta . grad u_i = R_i(u)   (or R_in)
///
/// with homogeneous Neumann data on every face.
struct ModelParams {
    double kappa = 1.0;
    std::vector<double> kappa_i{1.0};
    double tau = 0.0;
    std::vector<double> tau_i{0.0};
    double delta0 = 0.1;
    double epsilon = 0.0; ///< 0 keeps the raw discrete gradient of theta in the species equations
    std::optional<double> n_clamp;
    BetaMatrix beta = BetaMatrix::constant(1, 0.0);
    KernelOptions mollifier{};

    std::size_t species() const { return beta.species(); }

    Problem problem() const {
        if (epsilon > 0.0) return n_clamp ? Problem::P_eps_n : Problem::P_eps;
        return n_clamp ? Problem::P_n : Problem::P;
    }

    void validate() const {
        const std::size_t n = species();
        if (!(kappa > 0.0)) fail(ErrorKind::SchemaError, "kappa must be positive");
        if (kappa_i.size() != n)
            fail(ErrorKind::ConsistencyError, "kappa_i has " + std::to_string(kappa_i.size()) + " entries for " +
                                                  std::to_string(n) + " species");
        if (tau_i.size() != n)
            fail(ErrorKind::ConsistencyError, "tau_i has " + std::to_string(tau_i.size()) + " entries for " +
                                                  std::to_string(n) + " species");
        for (double k : kappa_i)
            if (!(k > 0.0)) fail(ErrorKind::SchemaError, "kappa_i must be positive");
        if (!(tau >= 0.0)) fail(ErrorKind::SchemaError, "tau must be non-negative");
        for (double t : tau_i)
            if (!(t >= 0.0)) fail(ErrorKind::SchemaError, "tau_i must be non-negative");
        if (!(delta0 > 0.0)) fail(ErrorKind::SchemaError, "delta0 must be positive");
        if (!(epsilon >= 0.0)) fail(ErrorKind::SchemaError, "epsilon must be non-negative");
        if (n_clamp && !(*n_clamp >= 0.0)) fail(ErrorKind::SchemaError, "n_clamp must be non-negative");
    }
};

enum class Scheme { imex, picard };

inline std::string_view to_string(Scheme s) { return s == Scheme::imex ? "imex" : "picard"; }

struct SchemeConfig {
    Scheme scheme = Scheme::imex;
    double dt = 1e-3;
    double picard_tol = 1e-10;
    int picard_max_iters = 50;
    double linear_solve_tol = 1e-10;
    bool clamp_negative = false;

    void validate() const {
        if (!(dt > 0.0)) fail(ErrorKind::NonPositiveStep, "dt must be positive");
        if (!(picard_tol > 0.0)) fail(ErrorKind::SchemaError, "picard_tol must be positive");
        if (picard_max_iters < 1) fail(ErrorKind::SchemaError, "picard_max_iters must be at least 1");
        if (!(linear_solve_tol > 0.0)) fail(ErrorKind::SchemaError, "linear_solve_tol must be positive");
    }
};

struct State {
    double t = 0.0;
    ScalarField theta;
    std::vector<ScalarField> u;

    const Grid& grid() const { return theta.grid(); }
    std::size_t species() const { return u.size(); }
};

/// Step bound below which the explicit transport update is a convex combination and
/// the explicit reaction cannot drive a non-negative state negative.
struct StabilityAdvice {
    double transport_dt = std::numeric_limits<double>::infinity(); ///< h_min / (2 V_max)
    double reaction_dt = std::numeric_limits<double>::infinity();  ///< 1 / (2 beta_max U_max)
    double velocity_max = 0.0;     ///< max over nodes and equations of sum_k |a_k|
    double concentration_max = 0.0; ///< max over nodes of sum_j u_j^+

    double dt() const { return std::min(transport_dt, reaction_dt); }
};

struct PicardResult {
    State state;
    int iterations = 0;
    double final_residual = 0.0;
    std::vector<double> residuals; ///< successive-iterate L2 distances, one per iteration
};

inline constexpr double blow_up_threshold = 1e12;

/// Advances the coupled system by one step with either the IMEX splitting or the Picard
/// iteration on the linearized problem. Kernels and diffusion factorizations are built once.
class Integrator {
public:
    Integrator(const Grid& grid, ModelParams params, SchemeConfig cfg)
        : grid_(grid), params_(std::move(params)), cfg_(cfg),
          kernel_delta0_(build_kernel(params_.delta0, grid, params_.mollifier)) {
        params_.validate();
        cfg_.validate();
        for (const auto& w : kernel_delta0_.warnings) warn(w.code, "delta0: " + w.message);
        if (params_.epsilon > 0.0) {
            kernel_eps_ = build_kernel(params_.epsilon, grid, params_.mollifier);
            for (const auto& w : kernel_eps_->warnings) warn(w.code, "epsilon: " + w.message);
        }
    }

    const Grid& grid() const { return grid_; }
    const ModelParams& params() const { return params_; }
    const SchemeConfig& config() const { return cfg_; }
    const MollifierKernel& kernel_delta0() const { return kernel_delta0_; }
    const std::optional<MollifierKernel>& kernel_epsilon() const { return kernel_eps_; }

    /// Distinct warnings emitted so far, with the number of occurrences of each.
    const std::vector<std::pair<Diagnostic, std::size_t>>& warnings() const { return warnings_; }

    /// a_theta = tau * sum_i grad^{delta0} u_i
    VectorField theta_transport(const std::vector<ScalarField>& u) const {
        VectorField a(grid_);
        if (params_.tau == 0.0) return a;
        for (const auto& ui : u) a += smoothed_gradient(kernel_delta0_, ui);
        a *= params_.tau;
        return a;
    }

    /// grad^{eps} theta, or the raw discrete gradient when eps = 0.
    VectorField species_gradient(const ScalarField& theta) const {
        return kernel_eps_ ? smoothed_gradient(*kernel_eps_, theta) : gradient(theta);
    }

    /// Pointwise R_i(u) or R_in(u), one field per species.
    std::vector<ScalarField> reaction_fields(const std::vector<ScalarField>& u) const {
        const std::size_t n = params_.species();
        std::vector<ScalarField> out(n, ScalarField(grid_));
        std::vector<double> local(n), r(n);
        for (std::size_t p = 0; p < grid_.points(); ++p) {
            for (std::size_t i = 0; i < n; ++i) local[i] = u[i][p];
            if (params_.n_clamp) reaction_truncated(params_.beta, local, *params_.n_clamp, r);
            else reaction(params_.beta, local, r);
            for (std::size_t i = 0; i < n; ++i) out[i][p] = r[i];
        }
        return out;
    }

    StabilityAdvice advisory(const State& s) const {
        return advisory(theta_transport(s.u), species_gradient(s.theta), s.u);
    }

    State step(const State& s) {
        if (cfg_.scheme == Scheme::imex) return step_imex(s);
        auto r = step_picard(s);
        last_picard_ = r;
        return std::move(r.state);
    }

    /// Diffusion implicit; transport and reaction explicit at the old level.
    State step_imex(const State& s, std::optional<double> dt_override = std::nullopt) {
        check_state(s);
        const double dt = dt_override.value_or(cfg_.dt);
        const VectorField a_theta = theta_transport(s.u);
        const VectorField w = species_gradient(s.theta);
        check_advisory(advisory(a_theta, w, s.u), dt);

        ScalarField theta_rhs = s.theta;
        theta_rhs.axpy(dt, upwind_transport(a_theta, s.theta));

        const auto r = reaction_fields(s.u);
        State next{s.t + dt, diffusion_solver(dt, params_.kappa).solve(theta_rhs), {}};
        next.u.reserve(s.species());
        for (std::size_t i = 0; i < s.species(); ++i) {
            ScalarField rhs = s.u[i];
            if (params_.tau_i[i] != 0.0) {
                VectorField ai = w;
                ai *= params_.tau_i[i];
                rhs.axpy(dt, upwind_transport(ai, s.u[i]));
            }
            rhs.axpy(dt, r[i]);
            next.u.push_back(diffusion_solver(dt, params_.kappa_i[i]).solve(rhs));
        }
        finish(next);
        return next;
    }

    /// Fixed-point iteration of the map u_hat -> u: solve the theta equation implicitly with
    /// frozen grad^{delta0} u_hat, then each species equation implicitly with frozen
    /// grad^{eps} theta and frozen R(u_hat).
    PicardResult step_picard(const State& s, std::optional<double> dt_override = std::nullopt) {
        check_state(s);
        const double dt = dt_override.value_or(cfg_.dt);
        check_advisory(advisory(s), dt);
        const std::size_t n = s.species();

        PicardResult result{s, 0, 0.0, {}};
        std::vector<ScalarField> u_hat = s.u;
        int rising = 0;
        for (int k = 1; k <= cfg_.picard_max_iters; ++k) {
            const VectorField a_theta = theta_transport(u_hat);
            ImplicitSolver theta_solver(grid_, {dt, params_.kappa, &a_theta}, cfg_.linear_solve_tol);
            ScalarField theta = theta_solver.solve(s.theta);

            const VectorField w = species_gradient(theta);
            const auto r = reaction_fields(u_hat);
            std::vector<ScalarField> u;
            u.reserve(n);
            double dist2 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                ScalarField rhs = s.u[i];
                rhs.axpy(dt, r[i]);
                VectorField ai = w;
                ai *= params_.tau_i[i];
                ImplicitSolver solver(grid_, {dt, params_.kappa_i[i], params_.tau_i[i] != 0.0 ? &ai : nullptr},
                                      cfg_.linear_solve_tol);
                u.push_back(solver.solve(rhs));
                const ScalarField diff = u.back() - u_hat[i];
                dist2 += inner(diff, diff);
            }
            const double residual = std::sqrt(std::max(0.0, dist2));
            if (!result.residuals.empty() && residual >= result.residuals.back()) ++rising;
            else rising = 0;
            result.residuals.push_back(residual);
            result.iterations = k;
            result.final_residual = residual;
            result.state = State{s.t + dt, std::move(theta), std::move(u)};
            if (residual < cfg_.picard_tol) {
                finish(result.state);
                return result;
            }
            if (rising >= 3)
                fail(ErrorKind::PicardDivergence, "Picard residual failed to decrease for 3 consecutive iterations");
            u_hat = result.state.u;
        }
        fail(ErrorKind::PicardDivergence, "Picard iteration hit " + std::to_string(cfg_.picard_max_iters) +
                                              " iterations with residual " + std::to_string(result.final_residual));
    }

    const std::optional<PicardResult>& last_picard() const { return last_picard_; }

private:
    StabilityAdvice advisory(const VectorField& a_theta, const VectorField& w, const std::vector<ScalarField>& u) const {
        StabilityAdvice adv;
        double tau_i_max = 0.0;
        for (double t : params_.tau_i) tau_i_max = std::max(tau_i_max, t);
        for (std::size_t p = 0; p < grid_.points(); ++p) {
            adv.velocity_max = std::max({adv.velocity_max, a_theta.l1_magnitude(p), tau_i_max * w.l1_magnitude(p)});
            double total = 0.0;
            for (const auto& ui : u) total += positive_part(ui[p]);
            adv.concentration_max = std::max(adv.concentration_max, total);
        }
        if (adv.velocity_max > 0.0) adv.transport_dt = grid_.min_spacing() / (2.0 * adv.velocity_max);
        const double bmax = params_.beta.beta0();
        if (bmax > 0.0 && adv.concentration_max > 0.0) adv.reaction_dt = 1.0 / (2.0 * bmax * adv.concentration_max);
        return adv;
    }

    void check_advisory(const StabilityAdvice& adv, double dt) {
        if (dt > adv.dt())
            warn("dt_above_advisory", "dt " + std::to_string(dt) + " exceeds the advisory bound " +
                                          std::to_string(adv.dt()));
    }

    void check_state(const State& s) const {
        if (s.species() != params_.species())
            fail(ErrorKind::DimensionMismatch, "state has " + std::to_string(s.species()) + " species, model has " +
                                                   std::to_string(params_.species()));
        if (!(s.grid() == grid_)) fail(ErrorKind::GridMismatch, "state lives on a different grid");
        for (const auto& ui : s.u) ui.check_same_grid(s.theta);
    }

    void finish(State& s) const {
        auto check = [](const ScalarField& f, const char* name) {
            if (!f.all_finite() || f.max_abs() > blow_up_threshold)
                fail(ErrorKind::BlowUp, std::string(name) + " left the finite range");
        };
        check(s.theta, "theta");
        for (auto& ui : s.u) {
            check(ui, "u");
            if (cfg_.clamp_negative)
                for (double& v : ui.values()) v = std::max(v, 0.0);
        }
    }

    ImplicitSolver& diffusion_solver(double dt, double diffusivity) {
        const auto key = std::make_pair(dt, diffusivity);
        auto it = diffusion_solvers_.find(key);
        if (it == diffusion_solvers_.end())
            it = diffusion_solvers_
                     .emplace(key, ImplicitSolver(grid_, {dt, diffusivity, nullptr}, cfg_.linear_solve_tol))
                     .first;
        return it->second;
    }

    void warn(const std::string& code, const std::string& message) {
        for (auto& [d, count] : warnings_)
            if (d.code == code) {
                ++count;
                return;
            }
        warnings_.push_back({Diagnostic{code, message}, 1});
    }

    Grid grid_;
    ModelParams params_;
    SchemeConfig cfg_;
    MollifierKernel kernel_delta0_;
    std::optional<MollifierKernel> kernel_eps_;
    std::map<std::pair<double, double>, ImplicitSolver> diffusion_solvers_;
    std::vector<std::pair<Diagnostic, std::size_t>> warnings_;
    std::optional<PicardResult> last_picard_;
};

inline State step_imex(const State& s, const ModelParams& params, const SchemeConfig& cfg) {
    if (cfg.scheme != Scheme::imex) fail(ErrorKind::SchemaError, "step_imex requires scheme = imex");
    Integrator it(s.grid(), params, cfg);
    return it.step_imex(s);
}

inline PicardResult step_picard(const State& s, const ModelParams& params, const SchemeConfig& cfg) {
    if (cfg.scheme != Scheme::picard) fail(ErrorKind::SchemaError, "step_picard requires scheme = picard");
    Integrator it(s.grid(), params, cfg);
    return it.step_picard(s);
}

} // namespace thermosmolu
