#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"

namespace thermosmolu {

/// Axis-aligned box [0, L_x] x [0, L_y] x [0, L_z] sampled at nodes, d in {1,2,3}.
///
/// Nodes sit on the faces (h = L / (n - 1)). Storage is row-major with the
/// x index slowest: flat = (i * ny + j) * nz + k.
class Grid {
public:
    Grid(std::span<const double> extents, std::span<const std::size_t> cells) {
        if (extents.size() != cells.size() || extents.empty() || extents.size() > 3)
            fail(ErrorKind::SchemaError, "grid dimension must be 1, 2 or 3 with one extent and one point count per axis");
        dim_ = static_cast<int>(extents.size());
        for (int a = 0; a < dim_; ++a) {
            if (!(extents[a] > 0.0) || !std::isfinite(extents[a]))
                fail(ErrorKind::SchemaError, "grid extent must be positive on axis " + std::to_string(a));
            if (cells[a] < 3)
                fail(ErrorKind::SchemaError, "grid needs at least 3 points on axis " + std::to_string(a));
            extents_[a] = extents[a];
            cells_[a] = cells[a];
            spacing_[a] = extents[a] / static_cast<double>(cells[a] - 1);
        }
        std::size_t stride = 1;
        for (int a = dim_ - 1; a >= 0; --a) {
            strides_[a] = stride;
            stride *= cells_[a];
        }
        points_ = stride;
    }

    /// 1D convenience: [0, extent] with `cells` nodes.
    static Grid line(double extent, std::size_t cells) {
        const double e[] = {extent};
        const std::size_t c[] = {cells};
        return Grid(e, c);
    }

    static Grid box(std::initializer_list<double> extents, std::initializer_list<std::size_t> cells) {
        const std::vector<double> e(extents);
        const std::vector<std::size_t> c(cells);
        return Grid(e, c);
    }

    int dim() const { return dim_; }
    std::size_t points() const { return points_; }
    std::size_t cells(int axis) const { return cells_[axis]; }
    double extent(int axis) const { return extents_[axis]; }
    double spacing(int axis) const { return spacing_[axis]; }
    std::size_t stride(int axis) const { return strides_[axis]; }

    double min_spacing() const {
        double h = spacing_[0];
        for (int a = 1; a < dim_; ++a) h = std::min(h, spacing_[a]);
        return h;
    }
    double max_spacing() const {
        double h = spacing_[0];
        for (int a = 1; a < dim_; ++a) h = std::max(h, spacing_[a]);
        return h;
    }

    double volume() const {
        double v = 1.0;
        for (int a = 0; a < dim_; ++a) v *= extents_[a];
        return v;
    }

    /// Index of `flat` along `axis`.
    std::size_t index(std::size_t flat, int axis) const { return (flat / strides_[axis]) % cells_[axis]; }

    std::array<std::size_t, 3> indices(std::size_t flat) const {
        std::array<std::size_t, 3> idx{0, 0, 0};
        for (int a = 0; a < dim_; ++a) idx[a] = index(flat, a);
        return idx;
    }

    std::size_t flat(const std::array<std::size_t, 3>& idx) const {
        std::size_t f = 0;
        for (int a = 0; a < dim_; ++a) f += idx[a] * strides_[a];
        return f;
    }

    std::array<double, 3> position(std::size_t flat) const {
        std::array<double, 3> x{0.0, 0.0, 0.0};
        for (int a = 0; a < dim_; ++a) x[a] = static_cast<double>(index(flat, a)) * spacing_[a];
        return x;
    }

    /// Trapezoidal quadrature weight: product of h (interior) or h/2 (face) per axis.
    double quadrature_weight(std::size_t flat) const {
        double w = 1.0;
        for (int a = 0; a < dim_; ++a) {
            const std::size_t i = index(flat, a);
            w *= (i == 0 || i + 1 == cells_[a]) ? 0.5 * spacing_[a] : spacing_[a];
        }
        return w;
    }

    std::vector<double> quadrature_weights() const {
        std::vector<double> w(points_);
        for (std::size_t p = 0; p < points_; ++p) w[p] = quadrature_weight(p);
        return w;
    }

    bool operator==(const Grid& other) const {
        if (dim_ != other.dim_) return false;
        for (int a = 0; a < dim_; ++a)
            if (cells_[a] != other.cells_[a] || extents_[a] != other.extents_[a]) return false;
        return true;
    }

    std::string describe() const {
        std::string s = std::to_string(dim_) + "D";
        for (int a = 0; a < dim_; ++a) s += (a ? "x" : " ") + std::to_string(cells_[a]);
        return s;
    }

private:
    int dim_ = 1;
    std::array<double, 3> extents_{1.0, 1.0, 1.0};
    std::array<std::size_t, 3> cells_{1, 1, 1};
    std::array<double, 3> spacing_{1.0, 1.0, 1.0};
    std::array<std::size_t, 3> strides_{1, 1, 1};
    std::size_t points_ = 1;
};

/// Even reflection of a (possibly out-of-range) node index into [0, n-1].
/// The reflected sequence is periodic with period 2(n-1).
inline std::size_t reflect_index(long long i, std::size_t n) {
    const long long period = 2 * static_cast<long long>(n - 1);
    long long r = i % period;
    if (r < 0) r += period;
    if (r > static_cast<long long>(n - 1)) r = period - r;
    return static_cast<std::size_t>(r);
}

/// One real value per grid node.
class ScalarField {
public:
    explicit ScalarField(Grid grid, double fill = 0.0) : grid_(std::move(grid)), values_(grid_.points(), fill) {}

    ScalarField(Grid grid, std::vector<double> values) : grid_(std::move(grid)), values_(std::move(values)) {
        if (values_.size() != grid_.points())
            fail(ErrorKind::DimensionMismatch, "field has " + std::to_string(values_.size()) + " values for " +
                                                   std::to_string(grid_.points()) + " grid points");
    }

    template <class F>
    static ScalarField from_function(const Grid& grid, F&& f) {
        ScalarField out(grid);
        for (std::size_t p = 0; p < grid.points(); ++p) out.values_[p] = f(grid.position(p));
        return out;
    }

    const Grid& grid() const { return grid_; }
    std::size_t size() const { return values_.size(); }

    double& operator[](std::size_t p) { return values_[p]; }
    double operator[](std::size_t p) const { return values_[p]; }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }

    double min() const { return *std::min_element(values_.begin(), values_.end()); }
    double max() const { return *std::max_element(values_.begin(), values_.end()); }
    double max_abs() const {
        double m = 0.0;
        for (double v : values_) m = std::max(m, std::abs(v));
        return m;
    }
    bool all_finite() const {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

    ScalarField& operator+=(const ScalarField& o) {
        check_same_grid(o);
        for (std::size_t p = 0; p < values_.size(); ++p) values_[p] += o.values_[p];
        return *this;
    }
    ScalarField& operator-=(const ScalarField& o) {
        check_same_grid(o);
        for (std::size_t p = 0; p < values_.size(); ++p) values_[p] -= o.values_[p];
        return *this;
    }
    ScalarField& operator*=(double s) {
        for (double& v : values_) v *= s;
        return *this;
    }
    /// this += a * x
    ScalarField& axpy(double a, const ScalarField& x) {
        check_same_grid(x);
        for (std::size_t p = 0; p < values_.size(); ++p) values_[p] += a * x.values_[p];
        return *this;
    }

    friend ScalarField operator+(ScalarField a, const ScalarField& b) { return a += b; }
    friend ScalarField operator-(ScalarField a, const ScalarField& b) { return a -= b; }
    friend ScalarField operator*(double s, ScalarField a) { return a *= s; }

    void check_same_grid(const ScalarField& o) const {
        if (!(grid_ == o.grid_)) fail(ErrorKind::GridMismatch, "fields live on different grids");
    }

private:
    Grid grid_;
    std::vector<double> values_;
};

/// d components, one per axis.
class VectorField {
public:
    explicit VectorField(const Grid& grid) : components_(static_cast<std::size_t>(grid.dim()), ScalarField(grid)) {}

    int dim() const { return static_cast<int>(components_.size()); }
    const Grid& grid() const { return components_.front().grid(); }
    ScalarField& operator[](int axis) { return components_[static_cast<std::size_t>(axis)]; }
    const ScalarField& operator[](int axis) const { return components_[static_cast<std::size_t>(axis)]; }

    VectorField& operator+=(const VectorField& o) {
        for (int a = 0; a < dim(); ++a) (*this)[a] += o[a];
        return *this;
    }
    VectorField& operator*=(double s) {
        for (auto& c : components_) c *= s;
        return *this;
    }

    /// Euclidean magnitude at node p.
    double magnitude(std::size_t p) const {
        double s = 0.0;
        for (const auto& c : components_) s += c[p] * c[p];
        return std::sqrt(s);
    }
    /// Sum of absolute components at node p.
    double l1_magnitude(std::size_t p) const {
        double s = 0.0;
        for (const auto& c : components_) s += std::abs(c[p]);
        return s;
    }

    ScalarField magnitude_field() const {
        ScalarField m(grid());
        for (std::size_t p = 0; p < m.size(); ++p) m[p] = magnitude(p);
        return m;
    }

    double max_magnitude() const {
        double m = 0.0;
        for (std::size_t p = 0; p < grid().points(); ++p) m = std::max(m, magnitude(p));
        return m;
    }

private:
    std::vector<ScalarField> components_;
};

/// Second-order central differences. Face nodes use the even ghost f(-h) = f(h),
/// so the normal component on a face is exactly zero.
inline VectorField gradient(const ScalarField& f) {
    const Grid& g = f.grid();
    VectorField out(g);
    for (int a = 0; a < g.dim(); ++a) {
        const std::size_t s = g.stride(a);
        const std::size_t n = g.cells(a);
        const double inv2h = 0.5 / g.spacing(a);
        ScalarField& c = out[a];
        for (std::size_t p = 0; p < g.points(); ++p) {
            const std::size_t i = g.index(p, a);
            c[p] = (i == 0 || i + 1 == n) ? 0.0 : (f[p + s] - f[p - s]) * inv2h;
        }
    }
    return out;
}

/// 3/5/7-point Laplacian with homogeneous Neumann data via even ghost reflection.
inline ScalarField laplacian_neumann(const ScalarField& f) {
    const Grid& g = f.grid();
    ScalarField out(g);
    for (int a = 0; a < g.dim(); ++a) {
        const std::size_t s = g.stride(a);
        const std::size_t n = g.cells(a);
        const double inv_h2 = 1.0 / (g.spacing(a) * g.spacing(a));
        for (std::size_t p = 0; p < g.points(); ++p) {
            const std::size_t i = g.index(p, a);
            const double left = i == 0 ? f[p + s] : f[p - s];
            const double right = i + 1 == n ? f[p - s] : f[p + s];
            out[p] += (left - 2.0 * f[p] + right) * inv_h2;
        }
    }
    return out;
}

/// Trapezoidal integral over the box.
inline double integrate(const ScalarField& f) {
    const Grid& g = f.grid();
    double s = 0.0;
    for (std::size_t p = 0; p < g.points(); ++p) s += g.quadrature_weight(p) * f[p];
    return s;
}

inline double inner(const ScalarField& f, const ScalarField& h) {
    f.check_same_grid(h);
    const Grid& g = f.grid();
    double s = 0.0;
    for (std::size_t p = 0; p < g.points(); ++p) s += g.quadrature_weight(p) * f[p] * h[p];
    return s;
}

/// Trapezoidal L^p norm of a pointwise magnitude; p = infinity gives the max.
template <class Magnitude>
double lp_norm_of(const Grid& g, double p, Magnitude&& mag) {
    if (std::isinf(p)) {
        double m = 0.0;
        for (std::size_t q = 0; q < g.points(); ++q) m = std::max(m, mag(q));
        return m;
    }
    double s = 0.0;
    for (std::size_t q = 0; q < g.points(); ++q) s += g.quadrature_weight(q) * std::pow(mag(q), p);
    return std::pow(s, 1.0 / p);
}

inline double lp_norm(const ScalarField& f, double p) {
    if (p == 2.0) return std::sqrt(std::max(0.0, inner(f, f)));
    return lp_norm_of(f.grid(), p, [&](std::size_t q) { return std::abs(f[q]); });
}

inline double lp_norm(const VectorField& v, double p) {
    return lp_norm_of(v.grid(), p, [&](std::size_t q) { return v.magnitude(q); });
}

struct NormReport {
    double linf = 0.0;
    double l2 = 0.0;
    double l4 = 0.0;
    double h1_semi = 0.0; ///< L2 norm of the discrete gradient
};

inline NormReport norms(const ScalarField& f) {
    NormReport r;
    r.linf = f.max_abs();
    r.l2 = lp_norm(f, 2.0);
    r.l4 = lp_norm(f, 4.0);
    r.h1_semi = lp_norm(gradient(f), 2.0);
    return r;
}

} // namespace thermosmolu
