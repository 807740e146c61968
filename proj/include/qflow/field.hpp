#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "qflow/errors.hpp"
#include "qflow/qtensor.hpp"

namespace qflow {

/// Uniform node grid on [x0, x0+Lx] x [y0, y0+Ly]. nx, ny count interior
/// nodes; node 0 and node nx+1 in each direction form the boundary ring.
struct Grid2D {
    int nx = 3;
    int ny = 3;
    double x0 = 0.0;
    double y0 = 0.0;
    double Lx = 1.0;
    double Ly = 1.0;

    [[nodiscard]] double hx() const { return Lx / (nx + 1); }
    [[nodiscard]] double hy() const { return Ly / (ny + 1); }
    [[nodiscard]] double x(int i) const { return x0 + i * hx(); }
    [[nodiscard]] double y(int j) const { return y0 + j * hy(); }
    [[nodiscard]] int stride() const { return nx + 2; }
    [[nodiscard]] std::size_t node_count() const {
        return static_cast<std::size_t>(nx + 2) * static_cast<std::size_t>(ny + 2);
    }
};

inline Grid2D make_grid(int nx, int ny, double Lx = 1.0, double Ly = 1.0, double x0 = 0.0,
                        double y0 = 0.0) {
    require(nx >= 3 && ny >= 3, "grid needs at least 3 interior nodes per direction");
    require(Lx > 0.0 && Ly > 0.0, "grid extent must be positive");
    return {nx, ny, x0, y0, Lx, Ly};
}

/// QTensor2 values on every node of a Grid2D, ring included. The ring holds
/// the time-independent Dirichlet data.
class Field2D {
public:
    Field2D() = default;
    explicit Field2D(const Grid2D& grid) : grid_(grid), values_(grid.node_count()) {}

    using Profile = std::function<QTensor2(double, double)>;

    /// Interior from `initial`, ring from `boundary`. Writing the ring last
    /// enforces compatibility of the initial data with the boundary data.
    static Field2D from_functions(const Grid2D& grid, const Profile& initial,
                                  const Profile& boundary) {
        Field2D f(grid);
        for (int j = 0; j <= grid.ny + 1; ++j)
            for (int i = 0; i <= grid.nx + 1; ++i)
                f.at(i, j) = f.on_ring(i, j) ? boundary(grid.x(i), grid.y(j))
                                              : initial(grid.x(i), grid.y(j));
        return f;
    }

    /// Same profile everywhere; the ring takes the profile's own trace.
    static Field2D from_function(const Grid2D& grid, const Profile& profile) {
        return from_functions(grid, profile, profile);
    }

    [[nodiscard]] const Grid2D& grid() const { return grid_; }
    [[nodiscard]] bool on_ring(int i, int j) const {
        return i == 0 || j == 0 || i == grid_.nx + 1 || j == grid_.ny + 1;
    }

    QTensor2& at(int i, int j) { return values_[index(i, j)]; }
    [[nodiscard]] const QTensor2& at(int i, int j) const { return values_[index(i, j)]; }

    [[nodiscard]] const std::vector<QTensor2>& values() const { return values_; }
    std::vector<QTensor2>& values() { return values_; }

    [[nodiscard]] bool all_finite() const {
        for (const auto& v : values_)
            if (!std::isfinite(v.p) || !std::isfinite(v.q)) return false;
        return true;
    }

private:
    [[nodiscard]] std::size_t index(int i, int j) const {
        return static_cast<std::size_t>(j) * static_cast<std::size_t>(grid_.stride()) +
               static_cast<std::size_t>(i);
    }

    Grid2D grid_{};
    std::vector<QTensor2> values_;
};

/// Trapezoid weight of node (i, j): 1 inside, 1/2 on edges, 1/4 on corners.
inline double trapezoid_weight(const Grid2D& g, int i, int j) {
    double w = g.hx() * g.hy();
    if (i == 0 || i == g.nx + 1) w *= 0.5;
    if (j == 0 || j == g.ny + 1) w *= 0.5;
    return w;
}

/// L2 norm of a QTensor2 field (Frobenius pointwise), trapezoidal.
inline double l2_norm(const Field2D& f) {
    const Grid2D& g = f.grid();
    double sum = 0.0;
    for (int j = 0; j <= g.ny + 1; ++j)
        for (int i = 0; i <= g.nx + 1; ++i) sum += trapezoid_weight(g, i, j) * f.at(i, j).trace_sq();
    return std::sqrt(sum);
}

inline double l2_distance(const Field2D& f, const Field2D& g) {
    require(f.values().size() == g.values().size(), "fields live on different grids");
    const Grid2D& grid = f.grid();
    double sum = 0.0;
    for (int j = 0; j <= grid.ny + 1; ++j)
        for (int i = 0; i <= grid.nx + 1; ++i)
            sum += trapezoid_weight(grid, i, j) * (f.at(i, j) - g.at(i, j)).trace_sq();
    return std::sqrt(sum);
}

/// max over nodes of h^2 = p^2 + q^2.
inline double max_h2(const Field2D& f) {
    double m = 0.0;
    for (const auto& v : f.values()) m = std::max(m, v.h2());
    return m;
}

}  // namespace qflow
