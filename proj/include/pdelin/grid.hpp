#pragma once

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>
#include <json.hpp>

#include "errors.hpp"
#include "io.hpp"

namespace pdelin {

/// Tensor grid on [0,1]^dim given by per-axis coordinate lists.
/// Linear indices are row-major: the last axis varies fastest.
struct Grid {
    std::vector<std::vector<double>> axes;
    bool design = false;

    /// Uniform nodes k / intervals[a], k = 0..intervals[a], on each axis.
    static Grid uniform(const std::vector<int>& intervals) {
        Grid g;
        for (int n : intervals) {
            if (n < 1) throw DimensionError("grid needs at least one interval per axis");
            std::vector<double> ax(static_cast<std::size_t>(n) + 1);
            for (int k = 0; k <= n; ++k) ax[static_cast<std::size_t>(k)] = static_cast<double>(k) / n;
            g.axes.push_back(std::move(ax));
        }
        return g;
    }

    /// Design points 2i/(2m+1), i = 1..m, on each of d axes.
    static Grid design_grid(int m, int d) {
        if (m < 1 || d < 1) throw DimensionError("design grid needs m >= 1 and d >= 1");
        Grid g;
        g.design = true;
        std::vector<double> ax(static_cast<std::size_t>(m));
        for (int i = 1; i <= m; ++i) ax[static_cast<std::size_t>(i - 1)] = 2.0 * i / (2.0 * m + 1.0);
        g.axes.assign(static_cast<std::size_t>(d), ax);
        return g;
    }

    int dim() const noexcept { return static_cast<int>(axes.size()); }
    std::size_t nodes(int a) const { return axes[static_cast<std::size_t>(a)].size(); }
    double spacing(int a) const { return axes[static_cast<std::size_t>(a)][1] - axes[static_cast<std::size_t>(a)][0]; }

    std::vector<std::size_t> dims() const {
        std::vector<std::size_t> d;
        for (const auto& ax : axes) d.push_back(ax.size());
        return d;
    }

    std::size_t size() const {
        std::size_t s = 1;
        for (const auto& ax : axes) s *= ax.size();
        return s;
    }

    std::size_t stride(int a) const {
        std::size_t s = 1;
        for (int b = dim() - 1; b > a; --b) s *= nodes(b);
        return s;
    }

    std::vector<std::size_t> unravel(std::size_t idx) const {
        std::vector<std::size_t> k(axes.size());
        for (int a = dim() - 1; a >= 0; --a) {
            k[static_cast<std::size_t>(a)] = idx % nodes(a);
            idx /= nodes(a);
        }
        return k;
    }

    std::vector<double> point(std::size_t idx) const {
        auto k = unravel(idx);
        std::vector<double> x(axes.size());
        for (std::size_t a = 0; a < axes.size(); ++a) x[a] = axes[a][k[a]];
        return x;
    }

    /// True when the node lies on the boundary of one of the first `axes_count` axes.
    bool on_boundary(std::size_t idx, int axes_count) const {
        auto k = unravel(idx);
        for (int a = 0; a < axes_count; ++a)
            if (k[static_cast<std::size_t>(a)] == 0 || k[static_cast<std::size_t>(a)] + 1 == nodes(a)) return true;
        return false;
    }

    void require_uniform_unit(int min_nodes = 3) const {
        for (int a = 0; a < dim(); ++a) {
            if (static_cast<int>(nodes(a)) < min_nodes)
                throw DimensionError("grid too coarse: need at least " + std::to_string(min_nodes) + " points per axis");
            if (axes[static_cast<std::size_t>(a)].front() != 0.0 || axes[static_cast<std::size_t>(a)].back() != 1.0)
                throw DimensionError("operation needs a uniform grid including the boundary");
        }
    }

    bool operator==(const Grid&) const = default;
};

/// Values on a Grid plus provenance metadata.
struct GridFunction {
    Grid grid;
    std::vector<double> values;
    std::string family;
    bool one_sided_boundary = false;  ///< boundary values come from one-sided stencils

    static GridFunction sample(const Grid& g, const std::function<double(std::span<const double>)>& f,
                               std::string family = {}) {
        GridFunction out{g, std::vector<double>(g.size()), std::move(family)};
        for (std::size_t i = 0; i < out.values.size(); ++i) {
            auto x = g.point(i);
            out.values[i] = f(x);
        }
        return out;
    }

    std::size_t size() const noexcept { return values.size(); }
    double operator[](std::size_t i) const { return values[i]; }
    double& operator[](std::size_t i) { return values[i]; }

    void check_shape() const {
        if (values.size() != grid.size()) throw DimensionError("grid function values do not match grid shape");
    }
};

/// Max |a - b| over nodes not on the boundary of the first `axes_count` axes
/// (all axes when negative).
inline double interior_max_error(const GridFunction& a, const GridFunction& b, int axes_count = -1) {
    if (a.size() != b.size()) throw DimensionError("interior_max_error: size mismatch");
    if (axes_count < 0) axes_count = a.grid.dim();
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (!a.grid.on_boundary(i, axes_count)) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

/// CSV matrix (last axis along columns) plus `<stem>.json` with dims, spacing and family.
inline void write_grid_function(const std::filesystem::path& csv_path, const GridFunction& f) {
    f.check_shape();
    const std::size_t cols = f.grid.dim() == 1 ? 1 : f.grid.nodes(f.grid.dim() - 1);
    std::string out;
    for (std::size_t i = 0; i < f.size(); ++i) {
        out += io::format_double(f.values[i]);
        out += ((i + 1) % cols == 0) ? '\n' : ',';
    }
    io::write_atomic(csv_path, out);
    nlohmann::ordered_json meta;
    meta["dims"] = f.grid.dims();
    std::vector<double> spacing;
    for (int a = 0; a < f.grid.dim(); ++a) spacing.push_back(f.grid.nodes(a) > 1 ? f.grid.spacing(a) : 0.0);
    meta["spacing"] = spacing;
    meta["family"] = f.family;
    meta["design"] = f.grid.design;
    meta["one_sided_boundary"] = f.one_sided_boundary;
    meta["axes"] = f.grid.axes;
    auto json_path = csv_path;
    json_path.replace_extension(".json");
    io::write_atomic(json_path, meta.dump(2) + "\n");
}

inline GridFunction read_grid_function(const std::filesystem::path& csv_path) {
    auto json_path = csv_path;
    json_path.replace_extension(".json");
    GridFunction f;
    try {
        auto meta = nlohmann::json::parse(io::read_text(json_path));
        f.grid.axes = meta.at("axes").get<std::vector<std::vector<double>>>();
        f.grid.design = meta.value("design", false);
        f.family = meta.value("family", std::string{});
        f.one_sided_boundary = meta.value("one_sided_boundary", false);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(json_path.string() + ": " + e.what());
    }
    auto text = io::read_text(csv_path);
    std::size_t start = 0, lineno = 0;
    while (start < text.size()) {
        auto end = text.find('\n', start);
        if (end == std::string::npos) end = text.size();
        ++lineno;
        auto line = std::string_view(text).substr(start, end - start);
        if (!line.empty())
            for (auto& cell : io::split(line))
                f.values.push_back(io::parse_double(cell, csv_path.string() + ":" + std::to_string(lineno)));
        start = end + 1;
    }
    f.check_shape();
    return f;
}

// ---------------------------------------------------------------------------
// Finite-difference Dirichlet problems on uniform grids.

/// Interior unknowns of a uniform grid with respect to its first `axes_count` axes.
struct InteriorMap {
    std::vector<std::size_t> nodes;    ///< interior linear indices
    std::vector<long long> position;   ///< node -> unknown index, -1 on the boundary
};

inline InteriorMap interior_map(const Grid& g, int axes_count) {
    InteriorMap m;
    m.position.assign(g.size(), -1);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (!g.on_boundary(i, axes_count)) {
            m.position[i] = static_cast<long long>(m.nodes.size());
            m.nodes.push_back(i);
        }
    return m;
}

/// Discretization of  scale * sum_a D_a(c D_a u) - q u  on the interior of a
/// uniform grid, with c sampled at cell midpoints (c = 1 when empty) and q at
/// nodes (zero when empty). `A u_interior + boundary_term = (L u)_interior`.
struct FdProblem {
    InteriorMap map;
    Eigen::SparseMatrix<double> A;
    Eigen::VectorXd boundary_term;
};

inline FdProblem assemble_dirichlet(const Grid& g, double scale,
                                    const std::function<double(std::span<const double>)>& coeff,
                                    const std::vector<double>& q, const std::vector<double>& boundary_values) {
    g.require_uniform_unit();
    if (boundary_values.size() != g.size()) throw DimensionError("boundary values must cover the full grid");
    if (!q.empty() && q.size() != g.size()) throw DimensionError("reaction term must cover the full grid");
    FdProblem p;
    p.map = interior_map(g, g.dim());
    const auto n = static_cast<Eigen::Index>(p.map.nodes.size());
    p.boundary_term = Eigen::VectorXd::Zero(n);
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(static_cast<std::size_t>(n) * (2 * static_cast<std::size_t>(g.dim()) + 1));
    std::vector<double> mid(static_cast<std::size_t>(g.dim()));
    for (Eigen::Index r = 0; r < n; ++r) {
        const std::size_t node = p.map.nodes[static_cast<std::size_t>(r)];
        const auto x = g.point(node);
        double diag = q.empty() ? 0.0 : -q[node];
        for (int a = 0; a < g.dim(); ++a) {
            const double h = g.spacing(a);
            const std::size_t st = g.stride(a);
            for (int s : {-1, 1}) {
                const std::size_t nb = s < 0 ? node - st : node + st;
                double c = 1.0;
                if (coeff) {
                    mid = x;
                    mid[static_cast<std::size_t>(a)] += 0.5 * s * h;
                    c = coeff(mid);
                }
                const double w = scale * c / (h * h);
                diag -= w;
                const auto pos = p.map.position[nb];
                if (pos >= 0)
                    trip.emplace_back(r, pos, w);
                else
                    p.boundary_term(r) += w * boundary_values[nb];
            }
        }
        trip.emplace_back(r, r, diag);
    }
    p.A.resize(n, n);
    p.A.setFromTriplets(trip.begin(), trip.end());
    return p;
}

/// Solves (L u) = rhs on the interior with u = boundary_values on the boundary.
/// Returns the full-grid solution.
inline std::vector<double> solve_dirichlet(const FdProblem& p, const std::vector<double>& rhs_full,
                                           const std::vector<double>& boundary_values, const std::string& context) {
    const auto n = static_cast<Eigen::Index>(p.map.nodes.size());
    Eigen::VectorXd b(n);
    for (Eigen::Index r = 0; r < n; ++r)
        b(r) = (rhs_full.empty() ? 0.0 : rhs_full[p.map.nodes[static_cast<std::size_t>(r)]]) - p.boundary_term(r);
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(p.A);
    lu.factorize(p.A);
    if (lu.info() != Eigen::Success) throw NumericalError(context + ": singular finite-difference system");
    Eigen::VectorXd u = lu.solve(b);
    if (lu.info() != Eigen::Success || !u.allFinite()) throw NumericalError(context + ": finite-difference solve failed");
    std::vector<double> out = boundary_values;
    for (Eigen::Index r = 0; r < n; ++r) out[p.map.nodes[static_cast<std::size_t>(r)]] = u(r);
    return out;
}

/// Second derivative along axis a, central inside and second-order one-sided at the ends.
inline std::vector<double> second_difference(const Grid& g, const std::vector<double>& u, int a) {
    const double h = g.spacing(a);
    const std::size_t st = g.stride(a);
    const std::size_t n = g.nodes(a);
    std::vector<double> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        const std::size_t k = g.unravel(i)[static_cast<std::size_t>(a)];
        if (n < 4 && (k == 0 || k + 1 == n)) {
            const std::size_t c = k == 0 ? i + st : i - st;
            out[i] = (u[c + st] - 2 * u[c] + u[c - st]) / (h * h);
        } else if (k == 0)
            out[i] = (2 * u[i] - 5 * u[i + st] + 4 * u[i + 2 * st] - u[i + 3 * st]) / (h * h);
        else if (k + 1 == n)
            out[i] = (2 * u[i] - 5 * u[i - st] + 4 * u[i - 2 * st] - u[i - 3 * st]) / (h * h);
        else
            out[i] = (u[i + st] - 2 * u[i] + u[i - st]) / (h * h);
    }
    return out;
}

/// First derivative along axis a, central inside and second-order one-sided at the ends.
inline std::vector<double> first_difference(const Grid& g, const std::vector<double>& u, int a) {
    const double h = g.spacing(a);
    const std::size_t st = g.stride(a);
    const std::size_t n = g.nodes(a);
    std::vector<double> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) {
        const std::size_t k = g.unravel(i)[static_cast<std::size_t>(a)];
        if (k == 0)
            out[i] = (-3 * u[i] + 4 * u[i + st] - u[i + 2 * st]) / (2 * h);
        else if (k + 1 == n)
            out[i] = (3 * u[i] - 4 * u[i - st] + u[i - 2 * st]) / (2 * h);
        else
            out[i] = (u[i + st] - u[i - st]) / (2 * h);
    }
    return out;
}

/// Cumulative trapezoid integral along a 1-D uniform grid, starting at 0.
inline std::vector<double> cumulative_trapezoid(const std::vector<double>& v, double h) {
    std::vector<double> out(v.size(), 0.0);
    for (std::size_t i = 1; i < v.size(); ++i) out[i] = out[i - 1] + 0.5 * h * (v[i - 1] + v[i]);
    return out;
}

}  // namespace pdelin
