#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bases.hpp"
#include "darcy.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "seqspace.hpp"

namespace pdelin {

enum class Family { schrodinger, heat, darcy1d, darcyNd, volterra };

inline std::string family_name(Family f) {
    switch (f) {
        case Family::schrodinger: return "schrodinger";
        case Family::heat: return "heat";
        case Family::darcy1d: return "darcy1d";
        case Family::darcyNd: return "darcyNd";
        case Family::volterra: return "volterra";
    }
    return "unknown";
}

inline Family parse_family(const std::string& s) {
    for (auto f : {Family::schrodinger, Family::heat, Family::darcy1d, Family::darcyNd, Family::volterra})
        if (family_name(f) == s) return f;
    throw ConfigError("unknown PDE family '" + s + "'");
}

using ScalarFn = std::function<double(std::span<const double>)>;

/// PDE family together with its boundary, source and initial data.
/// Heat grids carry time as the last axis; g is then a function of (x, t).
struct ProblemSpec {
    Family family = Family::schrodinger;
    int d = 1;
    ScalarFn g;   ///< boundary data
    ScalarFn h;   ///< source (Darcy)
    ScalarFn u0;  ///< initial data (heat)
    double f_at_zero = std::numeric_limits<double>::quiet_NaN();  ///< f(0) for darcy1d
    std::function<double(double, double)> influx;                  ///< prescribed f on the Darcy influx boundary

    int grid_dim() const noexcept { return family == Family::heat ? d + 1 : d; }

    double g_at(double x) const {
        std::vector<double> p{x};
        return g(p);
    }

    void validate() const {
        if (d < 1) throw DimensionError("problem dimension must be >= 1");
        if (!g) throw ConfigError(family_name(family) + ": boundary data g is required");
        switch (family) {
            case Family::volterra:
                if (d != 1) throw DimensionError("volterra is one-dimensional");
                if (!(g_at(0.0) > 0.0)) throw DomainError("volterra needs g(0) > 0");
                break;
            case Family::darcy1d:
                if (d != 1) throw DimensionError("darcy1d is one-dimensional");
                if (!h) throw ConfigError("darcy1d: source h is required");
                break;
            case Family::darcyNd:
                if (d < 2) throw DimensionError("darcyNd needs d >= 2");
                if (!h) throw ConfigError("darcyNd: source h is required");
                break;
            case Family::heat:
                if (!u0) throw ConfigError("heat: initial data u0 is required");
                break;
            case Family::schrodinger: break;
        }
    }

    void check_grid(const Grid& grid) const {
        validate();
        if (grid.dim() != grid_dim())
            throw DimensionError(family_name(family) + ": grid has " + std::to_string(grid.dim()) + " axes, expected " +
                                 std::to_string(grid_dim()));
        grid.require_uniform_unit();
    }
};

namespace detail {

/// Cumulative integral of fn over the nodes of a uniform 1-D grid using a
/// trapezoid rule refined `refine` times per cell.
inline std::vector<double> refined_cumulative(const std::function<double(double)>& fn, const Grid& grid, int refine = 16) {
    const auto& ax = grid.axes[0];
    std::vector<double> out(ax.size(), 0.0);
    for (std::size_t k = 1; k < ax.size(); ++k) {
        const double a = ax[k - 1], b = ax[k], h = (b - a) / refine;
        double s = 0.5 * (fn(a) + fn(b));
        for (int r = 1; r < refine; ++r) s += fn(a + r * h);
        out[k] = out[k - 1] + s * h;
    }
    return out;
}

inline std::function<double(double)> of_x(const ScalarFn& f) {
    return [f](double x) {
        std::vector<double> p{x};
        return f(p);
    };
}

inline Grid spatial_part(const Grid& g, int d) {
    Grid s;
    s.axes.assign(g.axes.begin(), g.axes.begin() + d);
    return s;
}

/// Implicit Euler for w_t - (1/2) Lap w - f w = src on a (space..., time) grid,
/// with w = boundary on the lateral boundary and w = initial at t = 0.
inline std::vector<double> heat_march(const Grid& g, int d, const std::vector<double>& boundary,
                                      const std::vector<double>& src, const std::vector<double>& f) {
    const Grid sp = spatial_part(g, d);
    const std::size_t nt = g.nodes(d);
    const std::size_t ns = sp.size();
    const double dt = g.spacing(d);
    std::vector<double> w(g.size(), 0.0);
    for (std::size_t s = 0; s < ns; ++s) w[s * nt] = boundary[s * nt];
    std::vector<double> prev(ns), bslice(ns), q(ns), rhs(ns);
    for (std::size_t k = 1; k < nt; ++k) {
        for (std::size_t s = 0; s < ns; ++s) {
            const std::size_t idx = s * nt + k;
            prev[s] = w[s * nt + k - 1];
            bslice[s] = boundary[idx];
            q[s] = 1.0 / dt - (f.empty() ? 0.0 : f[idx]);
            rhs[s] = -prev[s] / dt - (src.empty() ? 0.0 : src[idx]);
        }
        auto prob = assemble_dirichlet(sp, 0.5, {}, q, bslice);
        auto slice = solve_dirichlet(prob, rhs, bslice, "heat");
        for (std::size_t s = 0; s < ns; ++s) w[s * nt + k] = slice[s];
    }
    return w;
}

/// Boundary/initial values of the heat problem sampled on the full grid (zero inside).
inline std::vector<double> heat_boundary(const ProblemSpec& spec, const Grid& g) {
    std::vector<double> b(g.size(), 0.0);
    const std::size_t nt = g.nodes(spec.d);
    for (std::size_t i = 0; i < g.size(); ++i) {
        const auto x = g.point(i);
        const bool t0 = (i % nt) == 0;
        if (t0)
            b[i] = spec.u0(std::span<const double>(x).first(static_cast<std::size_t>(spec.d)));
        else if (g.on_boundary(i, spec.d))
            b[i] = spec.g(x);
    }
    return b;
}

inline std::vector<double> sample_boundary(const ProblemSpec& spec, const Grid& g) {
    std::vector<double> b(g.size(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i)
        if (g.on_boundary(i, g.dim())) b[i] = spec.g(g.point(i));
    return b;
}

}  // namespace detail

/// The L-harmonic function matching the boundary data.
inline GridFunction harmonic_extension(const ProblemSpec& spec, const Grid& grid) {
    spec.check_grid(grid);
    GridFunction out{grid, std::vector<double>(grid.size()), family_name(spec.family)};
    switch (spec.family) {
        case Family::volterra: {
            const double g0 = spec.g_at(0.0);
            std::fill(out.values.begin(), out.values.end(), g0);
            return out;
        }
        case Family::darcy1d:
        case Family::schrodinger:
        case Family::darcyNd:
            if (spec.d == 1) {
                const double a = spec.g_at(0.0), b = spec.g_at(1.0);
                for (std::size_t i = 0; i < grid.size(); ++i) out[i] = a + (b - a) * grid.axes[0][i];
                return out;
            } else {
                auto bv = detail::sample_boundary(spec, grid);
                auto prob = assemble_dirichlet(grid, 1.0, {}, {}, bv);
                out.values = solve_dirichlet(prob, {}, bv, "harmonic extension");
                return out;
            }
        case Family::heat:
            out.values = detail::heat_march(grid, spec.d, detail::heat_boundary(spec, grid), {}, {});
            return out;
    }
    return out;
}

/// Grid solution u_f of the forward problem.
inline GridFunction forward_solve(const ProblemSpec& spec, const ScalarFn& f, const Grid& grid) {
    spec.check_grid(grid);
    GridFunction out{grid, {}, family_name(spec.family)};
    switch (spec.family) {
        case Family::schrodinger: {
            auto bv = detail::sample_boundary(spec, grid);
            std::vector<double> q(grid.size());
            for (std::size_t i = 0; i < grid.size(); ++i) q[i] = f(grid.point(i));
            auto prob = assemble_dirichlet(grid, 0.5, {}, q, bv);
            try {
                out.values = solve_dirichlet(prob, {}, bv, "schrodinger");
            } catch (const NumericalError& e) {
                throw NumericalError(std::string(e.what()) + " (schrodinger requires f >= 0)");
            }
            return out;
        }
        case Family::darcyNd: {
            auto bv = detail::sample_boundary(spec, grid);
            std::vector<double> rhs(grid.size());
            for (std::size_t i = 0; i < grid.size(); ++i) {
                const auto x = grid.point(i);
                if (!(f(x) > 0.0)) throw DomainError("darcyNd forward solve requires f > 0");
                rhs[i] = spec.h(x);
            }
            auto prob = assemble_dirichlet(grid, 1.0, f, {}, bv);
            out.values = solve_dirichlet(prob, rhs, bv, "darcyNd (requires f > 0)");
            return out;
        }
        case Family::heat: {
            std::vector<double> fv(grid.size());
            for (std::size_t i = 0; i < grid.size(); ++i) fv[i] = f(grid.point(i));
            out.values = detail::heat_march(grid, spec.d, detail::heat_boundary(spec, grid), {}, fv);
            return out;
        }
        case Family::volterra: {
            auto F = detail::refined_cumulative(detail::of_x(f), grid);
            const double g0 = spec.g_at(0.0);
            out.values.resize(grid.size());
            for (std::size_t i = 0; i < grid.size(); ++i) out[i] = g0 * std::exp(F[i]);
            return out;
        }
        case Family::darcy1d: {
            auto fx = detail::of_x(f);
            auto hx = detail::of_x(spec.h);
            for (double x : grid.axes[0])
                if (!(fx(x) > 0.0)) throw DomainError("darcy1d forward solve requires f > 0");
            // f u' = C + H with H = int_0^x h and u(1) - u(0) = g1 - g0.
            auto Hg = detail::refined_cumulative(hx, grid);
            // Refined integrals of 1/f and H/f over the grid cells.
            const int R = 16;
            const auto& ax = grid.axes[0];
            std::vector<double> inv_f(ax.size(), 0.0), h_over_f(ax.size(), 0.0);
            for (std::size_t k = 1; k < ax.size(); ++k) {
                const double a = ax[k - 1], step = (ax[k] - a) / R;
                double s1 = 0, s2 = 0;
                double Hprev = Hg[k - 1];
                for (int r = 0; r < R; ++r) {
                    const double x0 = a + r * step, x1 = x0 + step;
                    const double Hnext = Hprev + 0.5 * step * (hx(x0) + hx(x1));
                    s1 += 0.5 * step * (1 / fx(x0) + 1 / fx(x1));
                    s2 += 0.5 * step * (Hprev / fx(x0) + Hnext / fx(x1));
                    Hprev = Hnext;
                }
                inv_f[k] = inv_f[k - 1] + s1;
                h_over_f[k] = h_over_f[k - 1] + s2;
            }
            const double g0 = spec.g_at(0.0), g1 = spec.g_at(1.0);
            const double C = (g1 - g0 - h_over_f.back()) / inv_f.back();
            out.values.resize(ax.size());
            for (std::size_t k = 0; k < ax.size(); ++k) out[k] = g0 + C * inv_f[k] + h_over_f[k];
            return out;
        }
    }
    return out;
}

/// v = L u by finite differences; boundary nodes use one-sided stencils.
inline GridFunction apply_L(const ProblemSpec& spec, const GridFunction& u) {
    spec.check_grid(u.grid);
    u.check_shape();
    const Grid& g = u.grid;
    GridFunction out{g, std::vector<double>(g.size(), 0.0), family_name(spec.family), true};
    switch (spec.family) {
        case Family::schrodinger:
        case Family::darcyNd:
            for (int a = 0; a < g.dim(); ++a) {
                auto d2 = second_difference(g, u.values, a);
                for (std::size_t i = 0; i < g.size(); ++i) out[i] += d2[i];
            }
            return out;
        case Family::volterra:
        case Family::darcy1d: out.values = first_difference(g, u.values, 0); return out;
        case Family::heat: {
            const int d = spec.d;
            const std::size_t nt = g.nodes(d);
            const double dt = g.spacing(d);
            for (int a = 0; a < d; ++a) {
                auto d2 = second_difference(g, u.values, a);
                for (std::size_t i = 0; i < g.size(); ++i) out[i] -= 0.5 * d2[i];
            }
            // Backward difference in time matches the implicit Euler solver.
            for (std::size_t i = 0; i < g.size(); ++i) {
                const std::size_t k = i % nt;
                out[i] += k == 0 ? (u[i + 1] - u[i]) / dt : (u[i] - u[i - 1]) / dt;
            }
            return out;
        }
    }
    return out;
}

/// K v on the grid: the solution of L w = v with homogeneous data.
inline GridFunction apply_K(const ProblemSpec& spec, const GridFunction& v) {
    spec.check_grid(v.grid);
    v.check_shape();
    const Grid& g = v.grid;
    GridFunction out{g, {}, family_name(spec.family)};
    switch (spec.family) {
        case Family::schrodinger:
        case Family::darcyNd: {
            std::vector<double> zero(g.size(), 0.0);
            auto prob = assemble_dirichlet(g, 1.0, {}, {}, zero);
            out.values = solve_dirichlet(prob, v.values, zero, "K");
            return out;
        }
        case Family::heat:
            out.values = detail::heat_march(g, spec.d, std::vector<double>(g.size(), 0.0), v.values, {});
            return out;
        case Family::volterra: out.values = cumulative_trapezoid(v.values, g.spacing(0)); return out;
        case Family::darcy1d: {
            auto c = cumulative_trapezoid(v.values, g.spacing(0));
            const double total = c.back();
            for (std::size_t i = 0; i < c.size(); ++i) c[i] -= g.axes[0][i] * total;
            out.values = std::move(c);
            return out;
        }
    }
    return out;
}

struct SolutionOptions {
    double delta0 = 0.0;  ///< denominator floor; 0 disables the check
};

namespace detail {

inline double min_of(const std::vector<double>& x) { return *std::min_element(x.begin(), x.end()); }

/// e(v) = v / (c (Kv + g~)) for Schrodinger (c = 2), heat and Volterra (c = 1).
inline std::vector<double> quotient_formula(Family fam, const std::vector<double>& v, const std::vector<double>& denom,
                                            double delta0) {
    const double m = min_of(denom);
    if (delta0 > 0.0 && m < delta0)
        throw InversionDomainError(family_name(fam) + ": min(Kv + g~) = " + io::format_double(m) + " below floor " +
                                       io::format_double(delta0),
                                   m);
    std::vector<double> f(v.size(), 0.0);
    if (!(m > 0.0)) return f;  // the inverse is defined as zero off the positivity set
    const double c = fam == Family::schrodinger ? 2.0 : 1.0;
    for (std::size_t i = 0; i < v.size(); ++i) f[i] = v[i] / (c * denom[i]);
    return f;
}

}  // namespace detail

/// e(v) = (H + f(0) v(0)) / v for darcy1d, v = u' on a uniform 1-D grid.
inline std::vector<double> darcy1d_formula(const ProblemSpec& spec, const Grid& grid, const std::vector<double>& v,
                                           double delta0) {
    if (!std::isfinite(spec.f_at_zero)) throw ConfigError("darcy1d: f(0) is required for inversion");
    double m = std::numeric_limits<double>::infinity();
    double lo = m, hi = -m;
    for (double x : v) m = std::min(m, std::abs(x)), lo = std::min(lo, x), hi = std::max(hi, x);
    if ((delta0 > 0.0 && m < delta0) || m == 0.0 || (lo < 0.0 && hi > 0.0))
        throw InversionDomainError("darcy1d: min |v| = " + io::format_double(m) +
                                       (lo < 0.0 && hi > 0.0 ? " and v changes sign (use the zero-gradient variant)" : ""),
                                   m);
    auto H = detail::refined_cumulative(detail::of_x(spec.h), grid);
    std::vector<double> f(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) f[i] = (H[i] + spec.f_at_zero * v[0]) / v[i];
    return f;
}

/// Solution operator e(v) on the grid of v.
inline GridFunction solution_operator(const ProblemSpec& spec, const GridFunction& v, const SolutionOptions& opt = {}) {
    spec.check_grid(v.grid);
    GridFunction out{v.grid, {}, family_name(spec.family)};
    switch (spec.family) {
        case Family::schrodinger:
        case Family::heat:
        case Family::volterra: {
            auto kv = apply_K(spec, v);
            auto gt = harmonic_extension(spec, v.grid);
            for (std::size_t i = 0; i < kv.size(); ++i) kv[i] += gt[i];
            out.values = detail::quotient_formula(spec.family, v.values, kv.values, opt.delta0);
            return out;
        }
        case Family::darcy1d: out.values = darcy1d_formula(spec, v.grid, v.values, opt.delta0); return out;
        case Family::darcyNd: {
            if (spec.d != 2) throw DimensionError("darcyNd inversion is implemented for d = 2");
            auto u = apply_K(spec, v);
            auto gt = harmonic_extension(spec, v.grid);
            for (std::size_t i = 0; i < u.size(); ++i) u[i] += gt[i];
            auto rhs = GridFunction::sample(v.grid, spec.h);
            auto dg = darcy_grid_from_samples(u, v, rhs, spec.influx);
            return darcy_characteristics(dg).alpha;
        }
    }
    return out;
}

/// Solution operator for v given by coefficients in `sys`; v and Kv are synthesized on the grid.
inline GridFunction solution_operator(const ProblemSpec& spec, const CoeffSeq& v, const SvdSystem& sys, const Grid& grid,
                                      const SolutionOptions& opt = {}) {
    spec.check_grid(grid);
    GridFunction vg{grid, std::vector<double>(grid.size()), family_name(spec.family)};
    std::vector<double> kv(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto x = grid.point(i);
        vg[i] = evaluate(v, sys, x);
        kv[i] = evaluate_K(v, sys, x);
    }
    if (spec.family == Family::darcy1d) return GridFunction{grid, darcy1d_formula(spec, grid, vg.values, opt.delta0), "darcy1d"};
    if (spec.family == Family::darcyNd) return solution_operator(spec, vg, opt);
    auto gt = harmonic_extension(spec, grid);
    for (std::size_t i = 0; i < kv.size(); ++i) kv[i] += gt[i];
    return GridFunction{grid, detail::quotient_formula(spec.family, vg.values, kv, opt.delta0), family_name(spec.family)};
}

/// Darcy 1-D inversion when u' has one zero x_v; v = u'' here.
///
/// u'(x) = int_0^x v + b with b = g(1) - g(0) - int_0^1 int_0^t v, and
/// f = (H(x) - H(x_v)) / int_{x_v}^x v, filled with h(x_v)/v(x_v) at the zero.
struct ZeroGradientResult {
    GridFunction f;
    double x_v = 0.0;
};

inline ZeroGradientResult darcy1d_zero_gradient(const GridFunction& v, const ProblemSpec& spec) {
    if (spec.family != Family::darcy1d) throw ConfigError("darcy1d_zero_gradient needs a darcy1d problem");
    spec.check_grid(v.grid);
    const auto& ax = v.grid.axes[0];
    const double h = v.grid.spacing(0);
    auto V = cumulative_trapezoid(v.values, h);
    auto VV = cumulative_trapezoid(V, h);
    const double b = spec.g_at(1.0) - spec.g_at(0.0) - VV.back();
    std::vector<double> P(V.size());
    for (std::size_t i = 0; i < V.size(); ++i) P[i] = V[i] + b;
    std::size_t changes = 0, cell = 0;
    for (std::size_t i = 1; i < P.size(); ++i)
        if ((P[i - 1] < 0.0 && P[i] >= 0.0) || (P[i - 1] > 0.0 && P[i] <= 0.0)) ++changes, cell = i;
    if (changes != 1)
        throw InversionDomainError("darcy1d_zero_gradient: u' has " + std::to_string(changes) + " sign changes, expected 1",
                                   static_cast<double>(changes));
    // Primitive inside the cell with v linear between the nodes.
    const double x0 = ax[cell - 1], v0 = v[cell - 1], v1 = v[cell], P0 = P[cell - 1];
    auto Pat = [&](double x) {
        const double s = x - x0;
        return P0 + v0 * s + 0.5 * (v1 - v0) / h * s * s;
    };
    double lo = x0, hi = ax[cell];
    const bool rising = Pat(lo) < Pat(hi);
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        ((Pat(mid) < 0.0) == rising ? lo : hi) = mid;
    }
    const double xv = 0.5 * (lo + hi);
    const double vxv = v0 + (v1 - v0) * (xv - x0) / h;
    if (!(vxv > 0.0)) throw InversionDomainError("darcy1d_zero_gradient: v(x_v) must be positive", vxv);
    auto hx = detail::of_x(spec.h);
    auto Hg = detail::refined_cumulative(hx, v.grid);
    // H(x_v) from the node below plus a refined trapezoid over the partial cell.
    double Hxv = Hg[cell - 1];
    {
        const int R = 64;
        const double step = (xv - x0) / R;
        for (int r = 0; r < R; ++r) Hxv += 0.5 * step * (hx(x0 + r * step) + hx(x0 + (r + 1) * step));
    }
    const double fill = hx(xv) / vxv;
    ZeroGradientResult res{GridFunction{v.grid, std::vector<double>(ax.size()), "darcy1d"}, xv};
    for (std::size_t i = 0; i < ax.size(); ++i) {
        const double num = Hg[i] - Hxv;
        const double den = P[i] - Pat(xv);
        res.f[i] = std::abs(ax[i] - xv) < 1e-12 || den == 0.0 ? fill : num / den;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Heat operator as a dense nodal matrix.

/// K for the heat equation on (0,1) x (0,1] (d = 1): implicit Euler with the
/// three-point Laplacian, acting on interior spatial nodes and time levels
/// 1..nt. Row/column order is space-major. Weights are h * dt.
struct HeatOperator {
    Eigen::MatrixXd A;
    QuadratureGrid quadrature;
    Grid grid;                        ///< full (x, t) grid
    std::vector<std::size_t> nodes;   ///< full-grid index of each unknown
};

inline HeatOperator heat_operator_matrix(int nx, int nt) {
    if (nx < 2 || nt < 1) throw DimensionError("heat_operator_matrix needs nx >= 2 and nt >= 1");
    HeatOperator op;
    op.grid = Grid::uniform({nx, nt});
    const int m = nx - 1;
    const double h = 1.0 / nx, dt = 1.0 / nt;
    // S = (I - dt/2 Lap_h)^{-1}; block (k, k') = dt S^{k-k'+1} for k' <= k.
    Eigen::MatrixXd T = Eigen::MatrixXd::Identity(m, m);
    for (int i = 0; i < m; ++i) {
        T(i, i) += dt / (h * h);
        if (i) T(i, i - 1) = T(i - 1, i) = -0.5 * dt / (h * h);
    }
    Eigen::MatrixXd S = T.inverse();
    std::vector<Eigen::MatrixXd> powers{S};
    for (int k = 1; k < nt; ++k) powers.push_back(powers.back() * S);
    const int n = m * nt;
    op.A = Eigen::MatrixXd::Zero(n, n);
    auto pos = [nt](int i, int k) { return i * nt + k; };
    for (int k = 0; k < nt; ++k)
        for (int kp = 0; kp <= k; ++kp) {
            const auto& P = powers[static_cast<std::size_t>(k - kp)];
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < m; ++j) op.A(pos(i, k), pos(j, kp)) = dt * P(i, j);
        }
    for (int i = 0; i < m; ++i)
        for (int k = 0; k < nt; ++k) {
            op.quadrature.points.push_back({(i + 1) * h, (k + 1) * dt});
            op.quadrature.weights.push_back(h * dt);
            op.nodes.push_back(static_cast<std::size_t>(i + 1) * static_cast<std::size_t>(nt + 1) + static_cast<std::size_t>(k + 1));
        }
    return op;
}

}  // namespace pdelin
