#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "errors.hpp"
#include "grid.hpp"

namespace thermosmolu {

/// First-order upwind evaluation of a . grad f for the right-hand side form f_t = a . grad f.
///
/// Where a_k > 0 the information travels from the +x_k side, so the forward
/// difference is used; faces use the even ghost. With dt * sum_k |a_k| / h_k <= 1
/// the explicit update f + dt * (a . grad f) is a convex combination of nodal values.
inline ScalarField upwind_transport(const VectorField& a, const ScalarField& f) {
    const Grid& g = f.grid();
    ScalarField out(g);
    for (int ax = 0; ax < g.dim(); ++ax) {
        const std::size_t s = g.stride(ax);
        const std::size_t n = g.cells(ax);
        const double inv_h = 1.0 / g.spacing(ax);
        const ScalarField& c = a[ax];
        for (std::size_t p = 0; p < g.points(); ++p) {
            const double v = c[p];
            if (v == 0.0) continue;
            const std::size_t i = g.index(p, ax);
            if (v > 0.0) {
                const double right = i + 1 == n ? f[p - s] : f[p + s];
                out[p] += v * (right - f[p]) * inv_h;
            } else {
                const double left = i == 0 ? f[p + s] : f[p - s];
                out[p] += v * (f[p] - left) * inv_h;
            }
        }
    }
    return out;
}

/// The linear operator (I - dt * diffusivity * Lap_N - dt * A_up(a)) used by every implicit solve.
///
/// `transport` may be null (pure diffusion).
struct ImplicitOperator {
    double dt = 0.0;
    double diffusivity = 0.0;
    const VectorField* transport = nullptr;

    ScalarField apply(const ScalarField& x) const {
        ScalarField y = x;
        y.axpy(-dt * diffusivity, laplacian_neumann(x));
        if (transport) y.axpy(-dt, upwind_transport(*transport, x));
        return y;
    }

    /// Calls emit(col, value) for every nonzero of row p. Columns may repeat.
    template <class Emit>
    void row(const Grid& g, std::size_t p, Emit&& emit) const {
        double diag = 1.0;
        for (int ax = 0; ax < g.dim(); ++ax) {
            const std::size_t s = g.stride(ax);
            const std::size_t n = g.cells(ax);
            const std::size_t i = g.index(p, ax);
            const double h = g.spacing(ax);
            const double d = dt * diffusivity / (h * h);
            const std::size_t left = i == 0 ? p + s : p - s;
            const std::size_t right = i + 1 == n ? p - s : p + s;
            diag += 2.0 * d;
            emit(left, -d);
            emit(right, -d);
            if (transport) {
                const double v = (*transport)[ax][p];
                const double c = dt * std::abs(v) / h;
                if (v > 0.0) {
                    diag += c;
                    emit(right, -c);
                } else if (v < 0.0) {
                    diag += c;
                    emit(left, -c);
                }
            }
        }
        emit(p, diag);
    }
};

inline double euclidean_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

/// Relative residual |A x - b| / |b| (absolute when b = 0).
inline double relative_residual(const ImplicitOperator& op, const ScalarField& x, const ScalarField& b) {
    ScalarField r = op.apply(x);
    r -= b;
    const double nb = euclidean_norm(b.values());
    const double nr = euclidean_norm(r.values());
    return nb > 0.0 ? nr / nb : nr;
}

/// Thomas algorithm. The 1D implicit operators are diagonally dominant M-matrices, so no pivoting is needed.
inline std::vector<double> solve_tridiagonal(std::vector<double> lower, std::vector<double> diag,
                                             std::vector<double> upper, std::vector<double> rhs) {
    const std::size_t n = diag.size();
    for (std::size_t i = 1; i < n; ++i) {
        const double m = lower[i] / diag[i - 1];
        diag[i] -= m * upper[i - 1];
        rhs[i] -= m * rhs[i - 1];
    }
    std::vector<double> x(n);
    x[n - 1] = rhs[n - 1] / diag[n - 1];
    for (std::size_t i = n - 1; i-- > 0;) x[i] = (rhs[i] - upper[i] * x[i + 1]) / diag[i];
    return x;
}

/// Solves op x = b. 1D uses a tridiagonal sweep, higher dimensions a sparse LU factorization.
///
/// A solver may be reused for several right-hand sides of the same operator;
/// the factorization is computed on first use.
class ImplicitSolver {
public:
    ImplicitSolver(const Grid& grid, ImplicitOperator op, double tolerance)
        : grid_(grid), op_(op), tolerance_(tolerance) {}

    /// Solves for the correction x - b, whose right-hand side b - op(b) vanishes exactly on
    /// constants. Steady constant states therefore survive a step bit for bit.
    ScalarField solve(const ScalarField& b) {
        ScalarField r = b;
        r -= op_.apply(b);
        ScalarField x = grid_.dim() == 1 ? solve_1d(r) : solve_sparse(r);
        x += b;
        const double res = relative_residual(op_, x, b);
        if (!(res <= tolerance_) || !x.all_finite())
            fail(ErrorKind::LinearSolveFailure,
                 "implicit solve relative residual " + std::to_string(res) + " exceeds " + std::to_string(tolerance_));
        last_residual_ = res;
        return x;
    }

    double last_residual() const { return last_residual_; }

private:
    ScalarField solve_1d(const ScalarField& b) const {
        const std::size_t n = grid_.points();
        std::vector<double> lo(n, 0.0), di(n, 0.0), up(n, 0.0);
        for (std::size_t p = 0; p < n; ++p) {
            op_.row(grid_, p, [&](std::size_t c, double v) {
                if (c == p) di[p] += v;
                else if (c + 1 == p) lo[p] += v;
                else up[p] += v;
            });
        }
        std::vector<double> rhs(b.values().begin(), b.values().end());
        return ScalarField(grid_, solve_tridiagonal(std::move(lo), std::move(di), std::move(up), std::move(rhs)));
    }

    ScalarField solve_sparse(const ScalarField& b) {
        if (!lu_) {
            const auto n = static_cast<Eigen::Index>(grid_.points());
            std::vector<Eigen::Triplet<double>> triplets;
            triplets.reserve(grid_.points() * (2 * grid_.dim() + 1));
            for (std::size_t p = 0; p < grid_.points(); ++p)
                op_.row(grid_, p, [&](std::size_t c, double v) {
                    triplets.emplace_back(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(c), v);
                });
            Eigen::SparseMatrix<double> a(n, n);
            a.setFromTriplets(triplets.begin(), triplets.end());
            a.makeCompressed();
            lu_ = std::make_unique<Eigen::SparseLU<Eigen::SparseMatrix<double>>>();
            lu_->analyzePattern(a);
            lu_->factorize(a);
            if (lu_->info() != Eigen::Success) fail(ErrorKind::LinearSolveFailure, "sparse factorization failed");
        }
        Eigen::Map<const Eigen::VectorXd> rhs(b.values().data(), static_cast<Eigen::Index>(b.size()));
        Eigen::VectorXd x = lu_->solve(rhs);
        if (lu_->info() != Eigen::Success) fail(ErrorKind::LinearSolveFailure, "sparse solve failed");
        return ScalarField(grid_, std::vector<double>(x.data(), x.data() + x.size()));
    }

    Grid grid_;
    ImplicitOperator op_;
    double tolerance_;
    double last_residual_ = 0.0;
    std::unique_ptr<Eigen::SparseLU<Eigen::SparseMatrix<double>>> lu_;
};

} // namespace thermosmolu
