#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include "errors.hpp"
#include "grid.hpp"

namespace thermosmolu {

/// How a field is continued outside the box before convolution.
enum class Extension {
    reflect, ///< even reflection across faces (Neumann-consistent, preserves constants)
    zero,    ///< zero outside; kept for comparison only
};

/// How the smoothed gradient is formed.
enum class GradientMode {
    discrete, ///< central-difference gradient of the smoothed field
    analytic, ///< convolution with the sampled analytic gradient of the bump
};

struct Diagnostic {
    std::string code;
    std::string message;
};

/// exp(-1/(1-s^2)) for s^2 < 1, else 0.
inline double bump(double s2) { return s2 < 1.0 ? std::exp(-1.0 / (1.0 - s2)) : 0.0; }

/// Integral of the bump over the unit ball in `dim` dimensions.
///
/// Radial reduction plus composite 5-point Gauss-Legendre; the integrand is
/// flat to all orders at r = 1 so this converges far below 1e-14.
inline double bump_integral(int dim) {
    static constexpr double nodes[5] = {-0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831,
                                        0.9061798459386640};
    static constexpr double weights[5] = {0.2369268850561891, 0.4786286704993665, 0.5688888888888889,
                                          0.4786286704993665, 0.2369268850561891};
    const double sphere = dim == 1 ? 2.0 : dim == 2 ? 2.0 * std::numbers::pi : 4.0 * std::numbers::pi;
    const int panels = 400;
    const double w = 1.0 / panels;
    double total = 0.0;
    for (int k = 0; k < panels; ++k) {
        const double mid = (k + 0.5) * w;
        for (int q = 0; q < 5; ++q) {
            const double r = mid + 0.5 * w * nodes[q];
            total += 0.5 * w * weights[q] * std::pow(r, dim - 1) * bump(r * r);
        }
    }
    return sphere * total;
}

struct KernelTap {
    std::array<int, 3> offset{0, 0, 0};
    double weight = 0.0;
    std::array<double, 3> gradient_weight{0.0, 0.0, 0.0}; ///< sampled analytic gradient, same normalization
};

/// Discrete mollifier J_delta on a fixed grid spacing.
struct MollifierKernel {
    double delta = 0.0;
    int dim = 1;
    std::array<double, 3> spacing{1.0, 1.0, 1.0};
    std::array<int, 3> support_radius_cells{0, 0, 0};
    std::vector<KernelTap> taps;
    double cm = 0.0;         ///< continuum normalizer 1 / integral of the bump over the unit ball
    double raw_mass = 0.0;   ///< sum of cm * J_delta * h^d before renormalization
    Extension extension = Extension::reflect;
    GradientMode gradient_mode = GradientMode::discrete;
    std::vector<Diagnostic> warnings;

    bool is_identity() const { return taps.size() == 1; }

    double weight_sum() const {
        double s = 0.0, c = 0.0;
        for (const auto& t : taps) {
            const double y = t.weight - c;
            const double n = s + y;
            c = (n - s) - y;
            s = n;
        }
        return s;
    }
};

struct KernelOptions {
    Extension extension = Extension::reflect;
    GradientMode gradient_mode = GradientMode::discrete;
};

inline MollifierKernel build_kernel(double delta, const Grid& grid, KernelOptions options = {}) {
    if (!(delta > 0.0) || !std::isfinite(delta)) fail(ErrorKind::NonPositiveDelta, "mollifier radius must be positive");

    MollifierKernel k;
    k.delta = delta;
    k.dim = grid.dim();
    k.extension = options.extension;
    k.gradient_mode = options.gradient_mode;
    k.cm = 1.0 / bump_integral(grid.dim());
    double cell_volume = 1.0;
    for (int a = 0; a < k.dim; ++a) {
        k.spacing[a] = grid.spacing(a);
        k.support_radius_cells[a] = static_cast<int>(std::ceil(delta / grid.spacing(a)));
        cell_volume *= grid.spacing(a);
    }
    if (delta < 2.0 * grid.max_spacing()) {
        k.warnings.push_back({"kernel_under_resolved", "mollifier radius " + std::to_string(delta) +
                                                           " is below two grid spacings (" +
                                                           std::to_string(grid.max_spacing()) + ")"});
    }

    const auto& r = k.support_radius_cells;
    double raw_sum = 0.0;
    std::size_t center = 0;
    for (int i = -r[0]; i <= r[0]; ++i)
        for (int j = (k.dim > 1 ? -r[1] : 0); j <= (k.dim > 1 ? r[1] : 0); ++j)
            for (int l = (k.dim > 2 ? -r[2] : 0); l <= (k.dim > 2 ? r[2] : 0); ++l) {
                const std::array<int, 3> o{i, j, l};
                std::array<double, 3> x{};
                double s2 = 0.0;
                for (int a = 0; a < k.dim; ++a) {
                    x[a] = o[a] * k.spacing[a];
                    s2 += (x[a] / delta) * (x[a] / delta);
                }
                if (s2 >= 1.0) continue;
                KernelTap tap;
                tap.offset = o;
                tap.weight = bump(s2);
                const double dfac = -tap.weight * 2.0 / (delta * delta * (1.0 - s2) * (1.0 - s2));
                for (int a = 0; a < k.dim; ++a) tap.gradient_weight[a] = dfac * x[a];
                if (i == 0 && j == 0 && l == 0) center = k.taps.size();
                raw_sum += tap.weight;
                k.taps.push_back(tap);
            }

    k.raw_mass = raw_sum * k.cm * cell_volume / std::pow(delta, k.dim);
    for (auto& t : k.taps) {
        t.weight /= raw_sum;
        for (int a = 0; a < k.dim; ++a) t.gradient_weight[a] /= raw_sum;
    }
    // Fold the rounding defect into the center weight so the taps sum to one.
    double rest = 0.0, comp = 0.0;
    for (std::size_t q = 0; q < k.taps.size(); ++q) {
        if (q == center) continue;
        const double y = k.taps[q].weight - comp;
        const double n = rest + y;
        comp = (n - rest) - y;
        rest = n;
    }
    k.taps[center].weight = 1.0 - rest;
    return k;
}

namespace detail {

inline void check_kernel_grid(const MollifierKernel& k, const Grid& g) {
    bool ok = k.dim == g.dim();
    for (int a = 0; ok && a < g.dim(); ++a)
        ok = std::abs(k.spacing[a] - g.spacing(a)) <= 1e-12 * g.spacing(a);
    if (!ok) fail(ErrorKind::GridMismatch, "kernel was built for a different grid spacing or dimension");
}

/// Visits (tap, neighbor flat index) for all taps that land on a node after extension.
template <class Visit>
void for_each_neighbor(const MollifierKernel& k, const Grid& g, std::size_t p, Visit&& visit) {
    const auto idx = g.indices(p);
    for (const auto& t : k.taps) {
        std::size_t q = 0;
        bool inside = true;
        for (int a = 0; a < g.dim(); ++a) {
            const long long i = static_cast<long long>(idx[a]) + t.offset[a];
            const long long n = static_cast<long long>(g.cells(a));
            if (i < 0 || i >= n) {
                if (k.extension == Extension::zero) {
                    inside = false;
                    break;
                }
                q += reflect_index(i, g.cells(a)) * g.stride(a);
            } else {
                q += static_cast<std::size_t>(i) * g.stride(a);
            }
        }
        if (inside) visit(t, q);
    }
}

} // namespace detail

/// J_delta * f as a discrete convolution, accumulated as f(x) + sum w (f(x - o) - f(x))
/// so that constants pass through bit for bit under reflection.
inline ScalarField smooth(const MollifierKernel& k, const ScalarField& f) {
    const Grid& g = f.grid();
    detail::check_kernel_grid(k, g);
    ScalarField out(g);
    for (std::size_t p = 0; p < g.points(); ++p) {
        const double fp = f[p];
        double s = 0.0, visited = 0.0;
        detail::for_each_neighbor(k, g, p, [&](const KernelTap& t, std::size_t q) {
            s += t.weight * (f[q] - fp);
            visited += t.weight;
        });
        out[p] = k.extension == Extension::reflect ? fp + s : fp * visited + s;
    }
    return out;
}

/// grad(J_delta * f). In discrete mode this is exactly gradient(smooth(k, f)).
inline VectorField smoothed_gradient(const MollifierKernel& k, const ScalarField& f) {
    if (k.gradient_mode == GradientMode::discrete) return gradient(smooth(k, f));

    const Grid& g = f.grid();
    detail::check_kernel_grid(k, g);
    VectorField out(g);
    // Sum over y of grad J(x - y) f(y): the tap at offset o reads f(x - o).
    MollifierKernel mirrored = k;
    for (auto& t : mirrored.taps)
        for (int a = 0; a < 3; ++a) t.offset[a] = -t.offset[a];
    for (std::size_t p = 0; p < g.points(); ++p) {
        std::array<double, 3> s{0.0, 0.0, 0.0};
        detail::for_each_neighbor(mirrored, g, p, [&](const KernelTap& t, std::size_t q) {
            for (int a = 0; a < g.dim(); ++a) s[a] += t.gradient_weight[a] * f[q];
        });
        for (int a = 0; a < g.dim(); ++a) out[a][p] = s[a];
    }
    return out;
}

using SparseOperator = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// The linear map f -> smooth(k, f) as a sparse matrix.
inline SparseOperator smoothing_matrix(const MollifierKernel& k, const Grid& g) {
    detail::check_kernel_grid(k, g);
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(g.points() * k.taps.size());
    for (std::size_t p = 0; p < g.points(); ++p)
        detail::for_each_neighbor(k, g, p, [&](const KernelTap& t, std::size_t q) {
            entries.emplace_back(static_cast<int>(p), static_cast<int>(q), t.weight);
        });
    const auto n = static_cast<Eigen::Index>(g.points());
    SparseOperator m(n, n);
    m.setFromTriplets(entries.begin(), entries.end());
    return m;
}

/// One matrix per axis for f -> smoothed_gradient(k, f).
inline std::vector<SparseOperator> smoothed_gradient_matrices(const MollifierKernel& k, const Grid& g) {
    detail::check_kernel_grid(k, g);
    const auto n = static_cast<Eigen::Index>(g.points());
    std::vector<SparseOperator> out;
    if (k.gradient_mode == GradientMode::discrete) {
        const SparseOperator s = smoothing_matrix(k, g);
        for (int a = 0; a < g.dim(); ++a) {
            std::vector<Eigen::Triplet<double>> entries;
            const double inv2h = 0.5 / g.spacing(a);
            for (std::size_t p = 0; p < g.points(); ++p) {
                const std::size_t i = g.index(p, a);
                if (i == 0 || i + 1 == g.cells(a)) continue;
                entries.emplace_back(static_cast<int>(p), static_cast<int>(p + g.stride(a)), inv2h);
                entries.emplace_back(static_cast<int>(p), static_cast<int>(p - g.stride(a)), -inv2h);
            }
            SparseOperator d(n, n);
            d.setFromTriplets(entries.begin(), entries.end());
            out.push_back(SparseOperator(d * s));
        }
        return out;
    }
    MollifierKernel mirrored = k;
    for (auto& t : mirrored.taps)
        for (int a = 0; a < 3; ++a) t.offset[a] = -t.offset[a];
    for (int a = 0; a < g.dim(); ++a) {
        std::vector<Eigen::Triplet<double>> entries;
        for (std::size_t p = 0; p < g.points(); ++p)
            detail::for_each_neighbor(mirrored, g, p, [&](const KernelTap& t, std::size_t q) {
                entries.emplace_back(static_cast<int>(p), static_cast<int>(q), t.gradient_weight[a]);
            });
        SparseOperator m(n, n);
        m.setFromTriplets(entries.begin(), entries.end());
        out.push_back(std::move(m));
    }
    return out;
}

/// Exact sup over f of max_x |grad^delta f(x)| / |f|_2 in the trapezoid-weighted L2.
/// Per node this is the largest singular value of the d x n block of gradient rows scaled by w^(-1/2).
inline double smoothed_gradient_linf_l2_norm(const MollifierKernel& k, const Grid& g) {
    const auto ops = smoothed_gradient_matrices(k, g);
    const auto w = g.quadrature_weights();
    const int d = g.dim();
    double best = 0.0;
    for (std::size_t p = 0; p < g.points(); ++p) {
        // Gram matrix of the scaled rows; d <= 3.
        std::map<int, std::array<double, 3>> cols;
        for (int a = 0; a < d; ++a)
            for (SparseOperator::InnerIterator it(ops[a], static_cast<Eigen::Index>(p)); it; ++it)
                cols[static_cast<int>(it.col())][a] = it.value() / std::sqrt(w[static_cast<std::size_t>(it.col())]);
        Eigen::Matrix3d gram = Eigen::Matrix3d::Zero();
        for (const auto& [q, v] : cols)
            for (int a = 0; a < d; ++a)
                for (int b = 0; b < d; ++b) gram(a, b) += v[a] * v[b];
        Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(gram, Eigen::EigenvaluesOnly);
        best = std::max(best, std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff())));
    }
    return best;
}

/// sup over f of |grad^delta f|_2 / |f|_2 by power iteration on the weighted normal operator,
/// started from a seeded random field. Converges to the same value for almost every seed.
inline double smoothed_gradient_l2_norm(const MollifierKernel& k, const Grid& g, std::uint64_t seed = 1,
                                        int max_iterations = 5000, double rtol = 1e-12) {
    const auto ops = smoothed_gradient_matrices(k, g);
    const auto n = static_cast<Eigen::Index>(g.points());
    Eigen::VectorXd sw(n), isw(n);
    for (Eigen::Index p = 0; p < n; ++p) {
        sw(p) = std::sqrt(g.quadrature_weight(static_cast<std::size_t>(p)));
        isw(p) = 1.0 / sw(p);
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist;
    Eigen::VectorXd v(n);
    for (Eigen::Index p = 0; p < n; ++p) v(p) = dist(rng);
    v.normalize();
    double sigma2 = 0.0;
    for (int it = 0; it < max_iterations; ++it) {
        // B = W^(1/2) G W^(-1/2) per axis; iterate v <- B^T B v.
        Eigen::VectorXd next = Eigen::VectorXd::Zero(n);
        const Eigen::VectorXd x = isw.cwiseProduct(v);
        for (const auto& op : ops) {
            const Eigen::VectorXd bx = sw.cwiseProduct(op * x);
            next += isw.cwiseProduct(op.transpose() * sw.cwiseProduct(bx));
        }
        const double s2 = v.dot(next);
        const double norm = next.norm();
        if (norm == 0.0) return 0.0;
        v = next / norm;
        if (std::abs(s2 - sigma2) <= rtol * s2) {
            sigma2 = s2;
            break;
        }
        sigma2 = s2;
    }
    return std::sqrt(std::max(0.0, sigma2));
}

} // namespace thermosmolu
