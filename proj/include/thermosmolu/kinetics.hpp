#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"

namespace thermosmolu {

/// Symmetric non-negative coagulation rates beta(k, j) between sizes k+1 and j+1.
///
/// Indices are 0-based: species i holds clusters of size i + 1.
class BetaMatrix {
public:
    BetaMatrix() = default;

    static BetaMatrix constant(std::size_t species, double rate) {
        if (species < 1) fail(ErrorKind::ConsistencyError, "at least one species is required");
        if (!(rate >= 0.0) || !std::isfinite(rate)) fail(ErrorKind::SchemaError, "beta must be non-negative");
        BetaMatrix m;
        m.n_ = species;
        m.rates_.assign(species * species, rate);
        return m;
    }

    static BetaMatrix from_rows(const std::vector<std::vector<double>>& rows) {
        const std::size_t n = rows.size();
        if (n < 1) fail(ErrorKind::ConsistencyError, "at least one species is required");
        BetaMatrix m;
        m.n_ = n;
        m.rates_.resize(n * n);
        for (std::size_t i = 0; i < n; ++i) {
            if (rows[i].size() != n)
                fail(ErrorKind::ConsistencyError, "beta row " + std::to_string(i + 1) + " has " +
                                                      std::to_string(rows[i].size()) + " entries, expected " +
                                                      std::to_string(n));
            for (std::size_t j = 0; j < n; ++j) {
                const double b = rows[i][j];
                if (!(b >= 0.0) || !std::isfinite(b))
                    fail(ErrorKind::SchemaError, "beta(" + std::to_string(i + 1) + "," + std::to_string(j + 1) +
                                                     ") must be non-negative");
                m.rates_[i * n + j] = b;
            }
        }
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j)
                if (m(i, j) != m(j, i))
                    fail(ErrorKind::ConsistencyError, "beta is not symmetric at pair (" + std::to_string(i + 1) + "," +
                                                          std::to_string(j + 1) + ")");
        return m;
    }

    std::size_t species() const { return n_; }
    double operator()(std::size_t i, std::size_t j) const { return rates_[i * n_ + j]; }

    /// Envelope constant: the largest rate.
    double beta0() const { return rates_.empty() ? 0.0 : *std::max_element(rates_.begin(), rates_.end()); }

    std::vector<std::vector<double>> rows() const {
        std::vector<std::vector<double>> r(n_, std::vector<double>(n_));
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = 0; j < n_; ++j) r[i][j] = (*this)(i, j);
        return r;
    }

    bool is_constant() const {
        return std::all_of(rates_.begin(), rates_.end(), [&](double b) { return b == rates_.front(); });
    }

    bool operator==(const BetaMatrix&) const = default;

private:
    std::size_t n_ = 0;
    std::vector<double> rates_;
};

inline double positive_part(double r) { return r > 0.0 ? r : 0.0; }

/// sigma_n: clamp to [0, n].
inline double clamp(double r, double n) {
    if (r > n) return n;
    if (r >= 0.0) return r;
    return 0.0;
}

/// Smoluchowski production for the truncated system of N sizes:
///   R_i = 1/2 sum_{k+j=i} beta_kj u_k^+ u_j^+ - sum_{j=1..N} beta_ij u_i^+ u_j^+
inline void reaction(const BetaMatrix& beta, std::span<const double> u, std::span<double> out) {
    const std::size_t n = beta.species();
    if (u.size() != n || out.size() != n)
        fail(ErrorKind::DimensionMismatch, "state has " + std::to_string(u.size()) + " species, beta has " +
                                               std::to_string(n));
    double up[64];
    std::vector<double> heap;
    double* pos = up;
    if (n > 64) {
        heap.resize(n);
        pos = heap.data();
    }
    for (std::size_t i = 0; i < n; ++i) pos[i] = positive_part(u[i]);
    for (std::size_t i = 0; i < n; ++i) {
        double gain = 0.0;
        // sizes k+1 and j+1 with (k+1)+(j+1) = i+1
        for (std::size_t k = 0; k + 1 <= i; ++k) {
            const std::size_t j = i - 1 - k;
            gain += beta(k, j) * pos[k] * pos[j];
        }
        double loss = 0.0;
        for (std::size_t j = 0; j < n; ++j) loss += beta(i, j) * pos[j];
        out[i] = 0.5 * gain - loss * pos[i];
    }
}

inline std::vector<double> reaction(const BetaMatrix& beta, std::span<const double> u) {
    std::vector<double> out(u.size());
    reaction(beta, u, out);
    return out;
}

/// R_in(u) = R_i(sigma_n(u_1), ..., sigma_n(u_N)).
inline void reaction_truncated(const BetaMatrix& beta, std::span<const double> u, double n, std::span<double> out) {
    if (u.size() != beta.species())
        fail(ErrorKind::DimensionMismatch, "state has " + std::to_string(u.size()) + " species, beta has " +
                                               std::to_string(beta.species()));
    std::vector<double> clamped(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) clamped[i] = clamp(u[i], n);
    reaction(beta, clamped, out);
}

inline std::vector<double> reaction_truncated(const BetaMatrix& beta, std::span<const double> u, double n) {
    std::vector<double> out(u.size());
    reaction_truncated(beta, u, n, out);
    return out;
}

/// Comparison trajectories y_i(t) that dominate u_i pointwise.
///
///   y_1' = -beta_11 y_1^2
///   y_i' = (beta0 / 2) sum_{k<i} y_k^2 - beta_ii y_i^2,   y_i(0) = sup u_0i
class Envelope {
public:
    Envelope(std::vector<double> diag, double beta0) : diag_(std::move(diag)), beta0_(beta0) {}

    std::size_t species() const { return diag_.size(); }
    const std::vector<double>& times() const { return times_; }
    double horizon() const { return times_.empty() ? 0.0 : times_.back(); }

    /// y_i at the k-th stored time.
    double y(std::size_t k, std::size_t i) const { return values_[k * species() + i]; }
    std::span<const double> row(std::size_t k) const { return {values_.data() + k * species(), species()}; }

    /// Max over the computed horizon, per species.
    const std::vector<double>& y_inf_bound() const { return sup_; }
    double c_star() const { return sup_.empty() ? 0.0 : *std::max_element(sup_.begin(), sup_.end()); }

    void rhs(std::span<const double> y, std::span<double> dy) const {
        double acc = 0.0;
        for (std::size_t i = 0; i < species(); ++i) {
            dy[i] = 0.5 * beta0_ * acc - diag_[i] * y[i] * y[i];
            acc += y[i] * y[i];
        }
    }

    /// Cubic Hermite interpolation in time using the ODE right-hand side for slopes.
    std::vector<double> at(double t) const {
        if (times_.empty()) fail(ErrorKind::EnvelopeHorizonExceeded, "envelope is empty");
        if (t < 0.0 || t > horizon() * (1.0 + 1e-12) + 1e-14)
            fail(ErrorKind::EnvelopeHorizonExceeded, "time " + std::to_string(t) + " beyond envelope horizon " +
                                                         std::to_string(horizon()));
        const std::size_t n = species();
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        std::size_t k = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
        if (k + 1 >= times_.size()) return {row(times_.size() - 1).begin(), row(times_.size() - 1).end()};
        const double t0 = times_[k], t1 = times_[k + 1], h = t1 - t0;
        const double s = (t - t0) / h;
        std::vector<double> d0(n), d1(n), out(n);
        rhs(row(k), d0);
        rhs(row(k + 1), d1);
        const double h00 = (1 + 2 * s) * (1 - s) * (1 - s), h10 = s * (1 - s) * (1 - s);
        const double h01 = s * s * (3 - 2 * s), h11 = s * s * (s - 1);
        for (std::size_t i = 0; i < n; ++i)
            out[i] = h00 * y(k, i) + h10 * h * d0[i] + h01 * y(k + 1, i) + h11 * h * d1[i];
        return out;
    }

private:
    friend Envelope solve_envelope(const BetaMatrix&, std::span<const double>, double, double);

    std::vector<double> diag_;
    double beta0_ = 0.0;
    std::vector<double> times_;
    std::vector<double> values_;
    std::vector<double> sup_;
};

inline double default_envelope_step(const BetaMatrix& beta) {
    const double bmax = beta.beta0();
    return 1e-3 * std::min(1.0, bmax > 0.0 ? 1.0 / bmax : 1.0);
}

/// Classical RK4 on the triangular envelope system over [0, horizon].
inline Envelope solve_envelope(const BetaMatrix& beta, std::span<const double> y0, double horizon, double dt) {
    if (!(dt > 0.0)) fail(ErrorKind::NonPositiveStep, "envelope step must be positive");
    if (!(horizon >= 0.0)) fail(ErrorKind::SchemaError, "envelope horizon must be non-negative");
    const std::size_t n = beta.species();
    if (y0.size() != n)
        fail(ErrorKind::DimensionMismatch, "envelope needs " + std::to_string(n) + " initial values");
    for (double v : y0)
        if (!(v >= 0.0)) fail(ErrorKind::SchemaError, "envelope initial values must be non-negative");

    std::vector<double> diag(n);
    for (std::size_t i = 0; i < n; ++i) diag[i] = beta(i, i);
    Envelope env(std::move(diag), beta.beta0());

    const auto steps = static_cast<std::size_t>(std::ceil(horizon / dt - 1e-9));
    env.times_.reserve(steps + 1);
    env.values_.reserve((steps + 1) * n);
    std::vector<double> y(y0.begin(), y0.end()), k1(n), k2(n), k3(n), k4(n), tmp(n);
    env.times_.push_back(0.0);
    env.values_.insert(env.values_.end(), y.begin(), y.end());
    env.sup_ = y;
    for (std::size_t s = 1; s <= steps; ++s) {
        const double t0 = static_cast<double>(s - 1) * dt;
        const double t1 = s == steps ? horizon : static_cast<double>(s) * dt;
        const double h = t1 - t0;
        env.rhs(y, k1);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k1[i];
        env.rhs(tmp, k2);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + 0.5 * h * k2[i];
        env.rhs(tmp, k3);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = y[i] + h * k3[i];
        env.rhs(tmp, k4);
        for (std::size_t i = 0; i < n; ++i) {
            y[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            env.sup_[i] = std::max(env.sup_[i], y[i]);
        }
        env.times_.push_back(t1);
        env.values_.insert(env.values_.end(), y.begin(), y.end());
    }
    return env;
}

} // namespace thermosmolu
