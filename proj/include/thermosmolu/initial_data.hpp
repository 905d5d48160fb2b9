#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>

#include "errors.hpp"
#include "grid.hpp"

namespace thermosmolu {

enum class InitialKind { constant, cosine, gaussian, random };

inline std::string_view to_string(InitialKind k) {
    switch (k) {
    case InitialKind::constant: return "constant";
    case InitialKind::cosine: return "cosine";
    case InitialKind::gaussian: return "gaussian";
    case InitialKind::random: return "random";
    }
    return "?";
}

/// Initial data menu. All kinds are Neumann-compatible or smooth enough for the grid.
///
///   constant: base
///   cosine:   base + amplitude * prod_a cos(mode_a pi x_a / L_a)
///   gaussian: base + amplitude * exp(-|x - center|^2 / (2 width^2))   (center in units of L)
///   random:   base + amplitude * g, g in [0, 1] a rescaled sum of random low cosine modes
struct InitialSpec {
    InitialKind kind = InitialKind::constant;
    double base = 0.0;
    double amplitude = 0.0;
    std::array<int, 3> mode{1, 0, 0};
    std::array<double, 3> center{0.5, 0.5, 0.5};
    double width = 0.1;
    std::uint64_t seed = 1;
    int max_mode = 4;
};

inline ScalarField make_field(const Grid& g, const InitialSpec& s) {
    using std::numbers::pi;
    switch (s.kind) {
    case InitialKind::constant:
        return ScalarField(g, s.base);
    case InitialKind::cosine:
        return ScalarField::from_function(g, [&](const std::array<double, 3>& x) {
            double v = 1.0;
            for (int a = 0; a < g.dim(); ++a) v *= std::cos(s.mode[a] * pi * x[a] / g.extent(a));
            return s.base + s.amplitude * v;
        });
    case InitialKind::gaussian:
        return ScalarField::from_function(g, [&](const std::array<double, 3>& x) {
            double r2 = 0.0;
            for (int a = 0; a < g.dim(); ++a) {
                const double d = x[a] - s.center[a] * g.extent(a);
                r2 += d * d;
            }
            return s.base + s.amplitude * std::exp(-r2 / (2.0 * s.width * s.width));
        });
    case InitialKind::random: {
        if (s.max_mode < 1) fail(ErrorKind::SchemaError, "random initial data needs max_mode >= 1");
        std::mt19937_64 rng(s.seed);
        std::normal_distribution<double> coef(0.0, 1.0);
        const int m = s.max_mode;
        const int m1 = m + 1;
        const int m2 = g.dim() > 1 ? m + 1 : 1;
        const int m3 = g.dim() > 2 ? m + 1 : 1;
        std::vector<double> c(static_cast<std::size_t>(m1 * m2 * m3));
        for (double& v : c) v = coef(rng);
        ScalarField f = ScalarField::from_function(g, [&](const std::array<double, 3>& x) {
            double v = 0.0;
            for (int i = 0; i < m1; ++i)
                for (int j = 0; j < m2; ++j)
                    for (int k = 0; k < m3; ++k) {
                        if (i + j + k == 0) continue;
                        double term = c[static_cast<std::size_t>((i * m2 + j) * m3 + k)] / (1.0 + i * i + j * j + k * k);
                        term *= std::cos(i * pi * x[0] / g.extent(0));
                        if (g.dim() > 1) term *= std::cos(j * pi * x[1] / g.extent(1));
                        if (g.dim() > 2) term *= std::cos(k * pi * x[2] / g.extent(2));
                        v += term;
                    }
            return v;
        });
        const double lo = f.min(), hi = f.max();
        const double span = hi - lo;
        for (double& v : f.values()) v = s.base + s.amplitude * (span > 0.0 ? (v - lo) / span : 0.0);
        return f;
    }
    }
    fail(ErrorKind::SchemaError, "unknown initial data kind");
}

} // namespace thermosmolu
