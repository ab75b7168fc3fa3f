#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"

namespace pdelin {

/// Data for the single-measurement Darcy inversion on the delta-grid of [0,1]^2.
/// Arrays are indexed i * size + j with x = i delta, y = j delta.
struct DarcyGrid {
    double delta = 0.0;
    std::size_t size = 0;  ///< nodes per axis, 1/delta + 1
    std::vector<double> u, ux, uy, lap, rhs;
    std::function<double(double, double)> influx;  ///< prescribed f on the influx boundary

    Grid grid() const {
        const int n = static_cast<int>(size) - 1;
        return Grid::uniform({n, n});
    }

    void validate() const {
        const auto total = size * size;
        for (auto* a : {&u, &ux, &uy, &lap, &rhs})
            if (a->size() != total) throw DimensionError("DarcyGrid arrays must have (1/delta + 1)^2 entries");
    }
};

/// Number of intervals 1/delta, rejecting non-integer ratios.
inline int darcy_intervals(double delta) {
    const double r = 1.0 / delta;
    const long k = std::lround(r);
    if (!(delta > 0.0) || k < 2 || std::abs(r - static_cast<double>(k)) > 1e-9 * r)
        throw DomainError("Darcy grid spacing must satisfy 1/delta integer >= 2");
    return static_cast<int>(k);
}

/// Samples exact u, grad u, Laplacian and right-hand side on the delta-grid.
inline DarcyGrid darcy_grid_from_functions(double delta, const std::function<double(double, double)>& u,
                                           const std::function<std::pair<double, double>(double, double)>& grad,
                                           const std::function<double(double, double)>& lap,
                                           const std::function<double(double, double)>& rhs,
                                           std::function<double(double, double)> influx) {
    const int k = darcy_intervals(delta);
    DarcyGrid g;
    g.delta = 1.0 / k;
    g.size = static_cast<std::size_t>(k) + 1;
    g.influx = std::move(influx);
    for (std::size_t i = 0; i < g.size; ++i)
        for (std::size_t j = 0; j < g.size; ++j) {
            const double x = static_cast<double>(i) / k, y = static_cast<double>(j) / k;
            g.u.push_back(u(x, y));
            auto [gx, gy] = grad(x, y);
            g.ux.push_back(gx);
            g.uy.push_back(gy);
            g.lap.push_back(lap(x, y));
            g.rhs.push_back(rhs(x, y));
        }
    return g;
}

/// Builds the Darcy grid from nodal u and Laplacian using central differences for grad u.
inline DarcyGrid darcy_grid_from_samples(const GridFunction& u, const GridFunction& lap, const GridFunction& rhs,
                                         std::function<double(double, double)> influx) {
    if (u.grid.dim() != 2 || u.grid.nodes(0) != u.grid.nodes(1)) throw DimensionError("Darcy data must live on a square 2-D grid");
    if (lap.size() != u.size() || rhs.size() != u.size()) throw DimensionError("Darcy data arrays differ in size");
    u.grid.require_uniform_unit();
    DarcyGrid g;
    g.size = u.grid.nodes(0);
    g.delta = 1.0 / static_cast<double>(g.size - 1);
    g.u = u.values;
    g.ux = first_difference(u.grid, u.values, 0);
    g.uy = first_difference(u.grid, u.values, 1);
    g.lap = lap.values;
    g.rhs = rhs.values;
    g.influx = std::move(influx);
    return g;
}

/// C(u) = min over the grid of Laplacian + |grad u|^2.
inline double darcy_C(const DarcyGrid& g) {
    g.validate();
    double c = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < g.u.size(); ++i) c = std::min(c, g.lap[i] + g.ux[i] * g.ux[i] + g.uy[i] * g.uy[i]);
    return c;
}

struct CharacteristicsResult {
    GridFunction alpha;
    double C = 0.0;
    std::size_t first_branch = 0;       ///< small-gradient nodes, alpha = g / Laplacian
    std::size_t second_branch = 0;      ///< nodes linked along the characteristic step
    std::size_t boundary_steps = 0;     ///< steps clipped at the boundary crossing
    std::size_t influx_points = 0;      ///< boundary nodes taking the prescribed value
    std::size_t nonmonotone_links = 0;  ///< links whose target does not have smaller u
    std::size_t cycles_resolved = 0;    ///< link cycles solved as a fixed point
};

/// Grid recursion for f along the characteristics of grad u.
///
/// Small-gradient nodes take g / Laplacian. Otherwise the node steps to
/// x - z with z = delta [delta^{-1/2} grad u / |grad u|] ([.] truncates toward
/// zero) and combines the target value with the local data. Steps leaving the
/// square stop at the boundary crossing, where the prescribed influx value is
/// used. Nodes are resolved in increasing order of u.
inline CharacteristicsResult darcy_characteristics(const DarcyGrid& g) {
    g.validate();
    CharacteristicsResult res;
    res.C = darcy_C(g);
    if (!(res.C > 0.0))
        throw PreconditionError("Darcy inversion refused: C(u) = " + io::format_double(res.C) + " <= 0");

    const std::size_t M = g.size;
    const double delta = g.delta;
    const double sq = std::sqrt(delta);
    const double scale = 1.0 / sq;
    const auto total = M * M;
    std::vector<double> alpha(total, 0.0);
    std::vector<char> state(total, 0);  // 0 pending, 1 on stack, 2 done

    auto need_influx = [&](double x, double y) {
        if (!g.influx) throw ConfigError("Darcy inversion needs an influx value at (" + io::format_double(x) + ", " +
                                         io::format_double(y) + ") but none was supplied");
        return g.influx(x, y);
    };

    // Describes the local rule of a node: either a final value or a link.
    struct Rule {
        bool final = false;
        double value = 0.0;
        std::size_t target = 0;
        double r = 0.0;
    };
    auto rule = [&](std::size_t idx) {
        Rule out;
        const std::size_t i = idx / M, j = idx % M;
        const double x = static_cast<double>(i) * delta, y = static_cast<double>(j) * delta;
        const double gn = std::hypot(g.ux[idx], g.uy[idx]);
        if (gn < sq) {
            if (g.lap[idx] == 0.0) throw NumericalError("Darcy inversion: zero Laplacian at a small-gradient node");
            out.final = true;
            out.value = g.rhs[idx] / g.lap[idx];
            ++res.first_branch;
            return out;
        }
        const long a = static_cast<long>(std::trunc(scale * g.ux[idx] / gn));
        const long b = static_cast<long>(std::trunc(scale * g.uy[idx] / gn));
        if (a == 0 && b == 0) throw NumericalError("Darcy inversion: zero characteristic step");
        const long ti = static_cast<long>(i) - a, tj = static_cast<long>(j) - b;
        const double znorm = delta * std::hypot(static_cast<double>(a), static_cast<double>(b));
        if (ti >= 0 && tj >= 0 && ti < static_cast<long>(M) && tj < static_cast<long>(M)) {
            out.target = static_cast<std::size_t>(ti) * M + static_cast<std::size_t>(tj);
            out.r = gn / znorm;
            ++res.second_branch;
            return out;
        }
        // Largest t in [0,1] with x - t z inside the square.
        const double zx = a * delta, zy = b * delta;
        double t = 1.0;
        if (zx > 0) t = std::min(t, x / zx);
        if (zx < 0) t = std::min(t, (x - 1.0) / zx);
        if (zy > 0) t = std::min(t, y / zy);
        if (zy < 0) t = std::min(t, (y - 1.0) / zy);
        t = std::max(t, 0.0);
        out.final = true;
        if (t <= 0.0) {
            out.value = need_influx(x, y);
            ++res.influx_points;
            return out;
        }
        const double px = std::clamp(x - t * zx, 0.0, 1.0), py = std::clamp(y - t * zy, 0.0, 1.0);
        const double r = gn / (t * znorm);
        out.value = (g.rhs[idx] + need_influx(px, py) * r) / (g.lap[idx] + r);
        ++res.boundary_steps;
        ++res.second_branch;
        return out;
    };

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t p, std::size_t q) { return g.u[p] < g.u[q]; });

    std::vector<std::pair<std::size_t, Rule>> stack;
    for (std::size_t start : order) {
        if (state[start] == 2) continue;
        stack.clear();
        std::size_t cur = start;
        // Follow links until a resolved node or a final rule.
        while (true) {
            if (state[cur] == 1) {
                // A cycle closes on cur: compose the affine updates around it and solve for alpha[cur].
                auto pos = std::find_if(stack.begin(), stack.end(), [&](const auto& e) { return e.first == cur; });
                double A = 0.0, B = 1.0;
                for (auto it = stack.rbegin(); it.base() != pos; ++it) {
                    const auto& [node, rl] = *it;
                    const double den = g.lap[node] + rl.r;
                    A = (g.rhs[node] + rl.r * A) / den;
                    B = rl.r * B / den;
                }
                if (!(B < 1.0 - 1e-12)) throw NumericalError("Darcy inversion: characteristic cycle is not contractive");
                alpha[cur] = A / (1.0 - B);
                state[cur] = 2;
                ++res.cycles_resolved;
                break;
            }
            auto rl = rule(cur);
            if (rl.final) {
                alpha[cur] = rl.value;
                state[cur] = 2;
                break;
            }
            if (!(g.u[rl.target] < g.u[cur])) ++res.nonmonotone_links;
            state[cur] = 1;
            stack.emplace_back(cur, rl);
            if (state[rl.target] == 2) break;
            cur = rl.target;
        }
        for (auto it = stack.rbegin(); it != stack.rend(); ++it) {
            const auto [node, rl] = *it;
            alpha[node] = (g.rhs[node] + alpha[rl.target] * rl.r) / (g.lap[node] + rl.r);
            state[node] = 2;
        }
    }
    res.alpha = GridFunction{g.grid(), std::move(alpha), "darcyNd"};
    return res;
}

// ---------------------------------------------------------------------------
// Two-measurement inversion: grad f / f = -[lap u1, lap u2] [grad u1 grad u2]^{-1}.

struct MultimeasureResult {
    GridFunction f;
    std::vector<double> dlogf_x, dlogf_y;
    double max_condition = 0.0;
    double curl_residual = 0.0;       ///< max path difference over interior endpoints
    double boundary_curl_residual = 0.0;  ///< same over the full grid, corners included
};

/// Trapezoid integral of (gx, gy) from the anchor, x first then y (or y first then x).
inline std::vector<double> integrate_log_gradient(std::size_t M, double delta, const std::vector<double>& gx,
                                                  const std::vector<double>& gy, std::size_t ai, std::size_t aj,
                                                  bool x_first) {
    std::vector<double> out(M * M, 0.0);
    auto at = [M](std::size_t i, std::size_t j) { return i * M + j; };
    const auto& g1 = x_first ? gx : gy;
    const auto& g2 = x_first ? gy : gx;
    // Index helpers with the roles of the axes swapped for the y-first path.
    auto id = [&](std::size_t first, std::size_t second) { return x_first ? at(first, second) : at(second, first); };
    const std::size_t a1 = x_first ? ai : aj;
    const std::size_t a2 = x_first ? aj : ai;
    std::vector<double> line(M, 0.0);
    for (std::size_t p = a1 + 1; p < M; ++p) line[p] = line[p - 1] + 0.5 * delta * (g1[id(p - 1, a2)] + g1[id(p, a2)]);
    for (std::size_t p = a1; p-- > 0;) line[p] = line[p + 1] - 0.5 * delta * (g1[id(p, a2)] + g1[id(p + 1, a2)]);
    for (std::size_t p = 0; p < M; ++p) {
        out[id(p, a2)] = line[p];
        for (std::size_t q = a2 + 1; q < M; ++q)
            out[id(p, q)] = out[id(p, q - 1)] + 0.5 * delta * (g2[id(p, q - 1)] + g2[id(p, q)]);
        for (std::size_t q = a2; q-- > 0;) out[id(p, q)] = out[id(p, q + 1)] - 0.5 * delta * (g2[id(p, q)] + g2[id(p, q + 1)]);
    }
    return out;
}

inline MultimeasureResult darcy_multimeasure(const GridFunction& lap1, const GridFunction& lap2,
                                             const std::vector<double>& u1x, const std::vector<double>& u1y,
                                             const std::vector<double>& u2x, const std::vector<double>& u2y,
                                             std::pair<double, double> anchor, double f_anchor,
                                             double condition_cap = 1e6) {
    const Grid& g = lap1.grid;
    if (g.dim() != 2 || g.nodes(0) != g.nodes(1)) throw DimensionError("darcy_multimeasure needs a square 2-D grid");
    const std::size_t M = g.nodes(0), total = M * M;
    for (auto* a : {&lap2.values, &u1x, &u1y, &u2x, &u2y})
        if (a->size() != total) throw DimensionError("darcy_multimeasure: array size mismatch");
    if (!(f_anchor > 0.0)) throw DomainError("darcy_multimeasure: anchor value must be positive");
    const double delta = g.spacing(0);
    MultimeasureResult res;
    res.dlogf_x.resize(total);
    res.dlogf_y.resize(total);
    for (std::size_t k = 0; k < total; ++k) {
        // Columns of the matrix are grad u1 and grad u2.
        const double a = u1x[k], b = u2x[k], c = u1y[k], d = u2y[k];
        const double det = a * d - b * c;
        const double fro2 = a * a + b * b + c * c + d * d;
        const double disc = std::sqrt(std::max(0.0, fro2 * fro2 - 4 * det * det));
        const double smax = std::sqrt(0.5 * (fro2 + disc));
        const double smin2 = 0.5 * (fro2 - disc);
        const double cond = smin2 > 0 ? smax / std::sqrt(smin2) : std::numeric_limits<double>::infinity();
        res.max_condition = std::max(res.max_condition, cond);
        if (!(cond <= condition_cap)) {
            const auto x = g.point(k);
            throw InversionDomainError("darcy_multimeasure: gradient matrix condition number " + io::format_double(cond) +
                                           " exceeds cap at (" + io::format_double(x[0]) + ", " + io::format_double(x[1]) + ")",
                                       cond);
        }
        // Row vector times inverse: [l1 l2] * (1/det) [d -b; -c a].
        const double l1 = lap1[k], l2 = lap2[k];
        res.dlogf_x[k] = -(l1 * d - l2 * c) / det;
        res.dlogf_y[k] = -(-l1 * b + l2 * a) / det;
    }
    const auto ai = static_cast<std::size_t>(std::lround(std::clamp(anchor.first, 0.0, 1.0) / delta));
    const auto aj = static_cast<std::size_t>(std::lround(std::clamp(anchor.second, 0.0, 1.0) / delta));
    auto pa = integrate_log_gradient(M, delta, res.dlogf_x, res.dlogf_y, ai, aj, true);
    auto pb = integrate_log_gradient(M, delta, res.dlogf_x, res.dlogf_y, ai, aj, false);
    res.f = GridFunction{g, std::vector<double>(total), "darcyNd"};
    for (std::size_t k = 0; k < total; ++k) {
        const double gap = std::abs(pa[k] - pb[k]);
        res.boundary_curl_residual = std::max(res.boundary_curl_residual, gap);
        // Both staircase paths to an interior node stay off the boundary rows when the anchor is interior.
        if (!g.on_boundary(k, 2)) res.curl_residual = std::max(res.curl_residual, gap);
        res.f[k] = f_anchor * std::exp(pa[k]);
    }
    return res;
}

}  // namespace pdelin
