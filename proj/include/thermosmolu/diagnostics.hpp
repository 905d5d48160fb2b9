#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "initial_data.hpp"
#include "kinetics.hpp"
#include "mollifier.hpp"
#include "timestepper.hpp"

namespace thermosmolu {

enum class ObserverKind { norms, max_principle, positivity, envelope, mass_moment, l4_gradient, decay };
enum class Severity { hard, soft };

inline constexpr ObserverKind all_observer_kinds[] = {
    ObserverKind::norms,       ObserverKind::max_principle, ObserverKind::positivity, ObserverKind::envelope,
    ObserverKind::mass_moment, ObserverKind::l4_gradient,   ObserverKind::decay};

inline std::string_view to_string(ObserverKind k) {
    switch (k) {
    case ObserverKind::norms: return "norms";
    case ObserverKind::max_principle: return "max_principle";
    case ObserverKind::positivity: return "positivity";
    case ObserverKind::envelope: return "envelope";
    case ObserverKind::mass_moment: return "mass_moment";
    case ObserverKind::l4_gradient: return "l4_gradient";
    case ObserverKind::decay: return "decay";
    }
    return "?";
}

inline std::optional<ObserverKind> observer_kind_from_string(std::string_view s) {
    for (auto k : all_observer_kinds)
        if (to_string(k) == s) return k;
    return std::nullopt;
}

inline std::string_view to_string(Severity s) { return s == Severity::hard ? "hard" : "soft"; }

/// What to check, how often, and how strictly.
///
/// `tolerance` is absolute except for positivity, where it is relative to the largest
/// initial concentration. The envelope check additionally uses `relative_tolerance`:
/// a violation is sup u_i > y_i (1 + relative_tolerance) + tolerance.
struct ObserverSpec {
    ObserverKind kind = ObserverKind::norms;
    int stride = 1;
    Severity severity = Severity::hard;
    double tolerance = 0.0;
    double relative_tolerance = 0.0;

    void validate() const {
        if (stride < 1) fail(ErrorKind::SchemaError, "observer stride must be at least 1");
        if (!std::isfinite(tolerance) || tolerance < 0.0 || !std::isfinite(relative_tolerance) ||
            relative_tolerance < 0.0)
            fail(ErrorKind::SchemaError, "observer tolerance must be finite and non-negative");
    }
};

inline ObserverSpec default_observer(ObserverKind kind) {
    ObserverSpec s;
    s.kind = kind;
    switch (kind) {
    case ObserverKind::max_principle: s.tolerance = 1e-10; break;
    case ObserverKind::positivity: s.tolerance = 1e-8; break;
    case ObserverKind::envelope:
        s.tolerance = 1e-8;
        s.relative_tolerance = 1e-6;
        break;
    case ObserverKind::mass_moment: s.tolerance = 1e-10; break;
    case ObserverKind::decay: s.tolerance = 1e-6; break;
    default: s.severity = Severity::soft; break;
    }
    return s;
}

struct SeriesRecord {
    double t = 0.0;
    std::vector<std::pair<std::string, double>> values;

    std::optional<double> get(std::string_view name) const {
        for (const auto& [k, v] : values)
            if (k == name) return v;
        return std::nullopt;
    }
    void set(std::string name, double v) { values.emplace_back(std::move(name), v); }
};

struct Violation {
    ObserverKind kind{};
    Severity severity{};
    double t = 0.0;
    std::string quantity;
    double margin = 0.0;
    double threshold = 0.0;
};

/// Reference data the observers compare against.
struct ObservationContext {
    double theta0_sup = 0.0;
    std::vector<double> u0_sup;
    const Envelope* envelope = nullptr;
    std::optional<double> previous_mass_moment;

    static ObservationContext from_initial(const State& s, const Envelope* env = nullptr) {
        ObservationContext c;
        c.theta0_sup = s.theta.max_abs();
        for (const auto& ui : s.u) c.u0_sup.push_back(ui.max_abs());
        c.envelope = env;
        return c;
    }
};

struct Observation {
    SeriesRecord record;
    std::vector<Violation> violations;
};

inline std::string species_name(std::size_t i) { return "u" + std::to_string(i + 1); }

/// sum_i i * integral(u_i), sizes counted from 1.
inline double mass_moment(const std::vector<ScalarField>& u) {
    double m = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) m += static_cast<double>(i + 1) * integrate(u[i]);
    return m;
}

inline Observation observe(const State& s, const ObservationContext& ctx, const ObserverSpec& spec) {
    Observation obs;
    obs.record.t = s.t;
    auto& rec = obs.record;
    auto flag = [&](std::string quantity, double margin, double threshold) {
        if (margin > threshold) obs.violations.push_back({spec.kind, spec.severity, s.t, std::move(quantity), margin, threshold});
    };
    auto envelope_at = [&]() {
        if (!ctx.envelope) fail(ErrorKind::EnvelopeHorizonExceeded, "no envelope available for this observer");
        return ctx.envelope->at(s.t);
    };

    switch (spec.kind) {
    case ObserverKind::norms: {
        auto put = [&](const std::string& name, const ScalarField& f) {
            const NormReport n = norms(f);
            rec.set(name + "_linf", n.linf);
            rec.set(name + "_l2", n.l2);
            rec.set(name + "_l4", n.l4);
            rec.set(name + "_h1", n.h1_semi);
        };
        put("theta", s.theta);
        for (std::size_t i = 0; i < s.species(); ++i) put(species_name(i), s.u[i]);
        break;
    }
    case ObserverKind::max_principle: {
        const double lo = s.theta.min(), hi = s.theta.max();
        const double margin = std::max(-lo, hi - ctx.theta0_sup);
        rec.set("theta_min", lo);
        rec.set("theta_max", hi);
        rec.set("theta_mp_margin", margin);
        flag("theta_mp_margin", margin, spec.tolerance);
        break;
    }
    case ObserverKind::positivity: {
        double scale = 0.0;
        for (double v : ctx.u0_sup) scale = std::max(scale, v);
        const double threshold = spec.tolerance * (scale > 0.0 ? scale : 1.0);
        for (std::size_t i = 0; i < s.species(); ++i) {
            const double lo = s.u[i].min();
            rec.set(species_name(i) + "_min", lo);
            flag(species_name(i) + "_min", -lo, threshold);
        }
        break;
    }
    case ObserverKind::envelope: {
        const auto y = envelope_at();
        for (std::size_t i = 0; i < s.species(); ++i) {
            const double sup = s.u[i].max();
            rec.set(species_name(i) + "_envelope_gap", y[i] - sup);
            flag(species_name(i) + "_envelope_gap", sup - y[i] * (1.0 + spec.relative_tolerance), spec.tolerance);
        }
        break;
    }
    case ObserverKind::mass_moment: {
        const double m = mass_moment(s.u);
        rec.set("mass_moment", m);
        if (ctx.previous_mass_moment) flag("mass_moment", m - *ctx.previous_mass_moment, spec.tolerance);
        break;
    }
    case ObserverKind::l4_gradient: {
        rec.set("grad_theta_l4", lp_norm(gradient(s.theta), 4.0));
        for (std::size_t i = 0; i < s.species(); ++i)
            rec.set("grad_" + species_name(i) + "_l4", lp_norm(gradient(s.u[i]), 4.0));
        break;
    }
    case ObserverKind::decay: {
        const auto y = envelope_at();
        for (std::size_t i = 0; i < s.species(); ++i) {
            const double sup = s.u[i].max();
            const double ratio = y[i] > 0.0 ? sup / y[i] : (sup > 0.0 ? std::numeric_limits<double>::max() : 0.0);
            rec.set(species_name(i) + "_sup", sup);
            rec.set(species_name(i) + "_envelope", y[i]);
            rec.set(species_name(i) + "_ratio", ratio);
            flag(species_name(i) + "_ratio", ratio - 1.0, spec.tolerance);
        }
        break;
    }
    }
    return obs;
}

/// Runs a set of observers over a trajectory and accumulates one merged record per observed step.
class Monitor {
public:
    Monitor(std::vector<ObserverSpec> specs, ObservationContext ctx) : specs_(std::move(specs)), ctx_(std::move(ctx)) {
        for (const auto& s : specs_) s.validate();
    }

    /// Observes step `step` (0 = initial state); `force` ignores strides. Returns true if a hard observer fired.
    bool observe(const State& s, std::size_t step, bool force = false) {
        SeriesRecord merged;
        merged.t = s.t;
        bool any = false, hard = false;
        for (const auto& spec : specs_) {
            if (!force && step % static_cast<std::size_t>(spec.stride) != 0) continue;
            Observation o = thermosmolu::observe(s, ctx_, spec);
            if (spec.kind == ObserverKind::mass_moment) ctx_.previous_mass_moment = o.record.get("mass_moment");
            any = true;
            for (auto& kv : o.record.values) merged.values.push_back(std::move(kv));
            for (auto& v : o.violations) {
                hard = hard || v.severity == Severity::hard;
                violations_.push_back(std::move(v));
            }
        }
        if (any) {
            if (!series_.empty() && !(merged.t > series_.back().t))
                fail(ErrorKind::InvariantViolation, "series times must strictly increase");
            series_.push_back(std::move(merged));
        }
        return hard;
    }

    const std::vector<SeriesRecord>& series() const { return series_; }
    const std::vector<Violation>& violations() const { return violations_; }
    const std::vector<ObserverSpec>& specs() const { return specs_; }
    const ObservationContext& context() const { return ctx_; }

    std::optional<Violation> first_hard_violation() const {
        for (const auto& v : violations_)
            if (v.severity == Severity::hard) return v;
        return std::nullopt;
    }

private:
    std::vector<ObserverSpec> specs_;
    ObservationContext ctx_;
    std::vector<SeriesRecord> series_;
    std::vector<Violation> violations_;
};

struct SpeciesDecay {
    double final_ratio = 0.0;          ///< sup_x u_i(T) / y_i(T)
    double max_ratio = 0.0;            ///< over the whole series
    double tail_monotone_fraction = 1.0; ///< fraction of non-increasing sup steps in the final quartile
    std::optional<double> tail_slope;          ///< d log sup u_i / d log t over the final quartile
    std::optional<double> envelope_tail_slope; ///< same for y_i
};

struct DecaySummary {
    std::vector<SpeciesDecay> species;
};

namespace detail {

inline std::optional<double> loglog_slope(const std::vector<double>& t, const std::vector<double>& v) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int n = 0;
    for (std::size_t k = 0; k < t.size(); ++k) {
        if (!(t[k] > 0.0) || !(v[k] > 0.0)) continue;
        const double x = std::log(t[k]), y = std::log(v[k]);
        sx += x, sy += y, sxx += x * x, sxy += x * y;
        ++n;
    }
    const double den = n * sxx - sx * sx;
    if (n < 2 || !(std::abs(den) > 0.0)) return std::nullopt;
    return (n * sxy - sx * sy) / den;
}

} // namespace detail

/// Summarizes sup-norm decay from a series produced by the decay observer.
inline DecaySummary decay_report(const std::vector<SeriesRecord>& series) {
    DecaySummary out;
    if (series.empty()) return out;
    for (std::size_t i = 0;; ++i) {
        const std::string name = species_name(i);
        std::vector<double> t, sup, env, ratio;
        for (const auto& r : series) {
            auto s = r.get(name + "_sup");
            auto y = r.get(name + "_envelope");
            if (!s || !y) continue;
            t.push_back(r.t);
            sup.push_back(*s);
            env.push_back(*y);
            ratio.push_back(*y > 0.0 ? *s / *y : (*s > 0.0 ? std::numeric_limits<double>::max() : 0.0));
        }
        if (t.empty()) break;
        SpeciesDecay d;
        d.final_ratio = ratio.back();
        d.max_ratio = *std::max_element(ratio.begin(), ratio.end());
        const std::size_t start = (3 * t.size()) / 4;
        std::size_t steps = 0, monotone = 0;
        for (std::size_t k = start + 1; k < t.size(); ++k, ++steps)
            if (sup[k] <= sup[k - 1]) ++monotone;
        d.tail_monotone_fraction = steps ? static_cast<double>(monotone) / static_cast<double>(steps) : 1.0;
        const std::vector<double> tt(t.begin() + static_cast<long>(start), t.end());
        d.tail_slope = detail::loglog_slope(tt, {sup.begin() + static_cast<long>(start), sup.end()});
        d.envelope_tail_slope = detail::loglog_slope(tt, {env.begin() + static_cast<long>(start), env.end()});
        out.species.push_back(d);
    }
    return out;
}

/// Ratios realized by one field for the mollifier inequalities.
struct MollifierRatios {
    double grad_l2_over_l2 = 0.0;   ///< |grad^eps f|_2 / |f|_2
    double grad_linf_over_l2 = 0.0; ///< |grad^eps f|_inf / |f|_2
    double grad_l2_ratio = 0.0;     ///< |grad^eps f|_2 / |grad f|_2
    double grad_l4_ratio = 0.0;     ///< |grad^eps f|_4 / |grad f|_4
    double smooth_l2_ratio = 0.0;   ///< |J_eps * f|_2 / |f|_2
};

inline MollifierRatios mollifier_ratios(const MollifierKernel& k, const ScalarField& f) {
    MollifierRatios r;
    const double f2 = lp_norm(f, 2.0);
    const VectorField gs = smoothed_gradient(k, f);
    const VectorField g = gradient(f);
    const double g2 = lp_norm(g, 2.0), g4 = lp_norm(g, 4.0);
    if (f2 > 0.0) {
        r.grad_l2_over_l2 = lp_norm(gs, 2.0) / f2;
        r.grad_linf_over_l2 = gs.max_magnitude() / f2;
        r.smooth_l2_ratio = lp_norm(smooth(k, f), 2.0) / f2;
    }
    if (g2 > 0.0) r.grad_l2_ratio = lp_norm(gs, 2.0) / g2;
    if (g4 > 0.0) r.grad_l4_ratio = lp_norm(gs, 4.0) / g4;
    return r;
}

/// Measured constants of one kernel.
///
/// grad_l2_over_l2 and grad_linf_over_l2 are operator norms (power iteration seeded by `seed`,
/// and an exact row norm). The remaining ratios are maxima over `trials` random fields,
/// alternating white noise and smooth random modes.
inline MollifierRatios measure_mollifier_constants(const MollifierKernel& k, const Grid& grid, int trials,
                                                   std::uint64_t seed = 1) {
    if (trials < 1) fail(ErrorKind::SchemaError, "trials must be at least 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> noise(-1.0, 1.0);
    MollifierRatios best;
    for (int t = 0; t < trials; ++t) {
        ScalarField f(grid);
        if (t % 2 == 0) {
            for (double& v : f.values()) v = noise(rng);
        } else {
            InitialSpec s;
            s.kind = InitialKind::random;
            s.base = -0.5;
            s.amplitude = 1.0;
            s.seed = rng();
            s.max_mode = 8;
            f = make_field(grid, s);
        }
        const MollifierRatios r = mollifier_ratios(k, f);
        best.grad_l2_ratio = std::max(best.grad_l2_ratio, r.grad_l2_ratio);
        best.grad_l4_ratio = std::max(best.grad_l4_ratio, r.grad_l4_ratio);
        best.smooth_l2_ratio = std::max(best.smooth_l2_ratio, r.smooth_l2_ratio);
    }
    best.grad_l2_over_l2 = smoothed_gradient_l2_norm(k, grid, seed);
    best.grad_linf_over_l2 = smoothed_gradient_linf_l2_norm(k, grid);
    return best;
}

} // namespace thermosmolu
