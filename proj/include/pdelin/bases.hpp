#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "io.hpp"
#include "seqspace.hpp"

namespace pdelin {

/// Real-valued function of a point in the basis domain.
using PointFn = std::function<double(std::span<const double>)>;

enum class BasisKind { laplacian, volterra, darcy_dirichlet, darcy_mixed, discrete, spline };

/// One singular triple: K h = sign * kappa * g.
struct SingularTriple {
    double kappa = 0.0;
    int sign = 1;
    MultiIndex index;
    PointFn h;
    PointFn g;
};

/// Ordered singular system of an operator on the unit cube [0,1]^domain_dim.
struct SvdSystem {
    std::string id;
    BasisKind kind = BasisKind::laplacian;
    int d = 1;            ///< spatial dimension used for rates
    int domain_dim = 1;   ///< dimension of evaluation points
    double p = 1.0;       ///< ill-posedness degree
    std::vector<SingularTriple> triples;

    std::size_t size() const noexcept { return triples.size(); }

    std::vector<double> abs_kappas() const {
        std::vector<double> k(triples.size());
        for (std::size_t l = 0; l < k.size(); ++l) k[l] = std::abs(triples[l].kappa);
        return k;
    }

    void check_point(std::span<const double> x) const {
        if (static_cast<int>(x.size()) != domain_dim)
            throw DimensionError("point dimension " + std::to_string(x.size()) + " does not match basis domain " +
                                 std::to_string(domain_dim));
        for (double c : x)
            if (!(c >= 0.0 && c <= 1.0)) throw DomainError("point outside the unit cube");
    }
};

namespace detail {

inline double tensor_sine(const MultiIndex& i, std::span<const double> x) {
    double v = std::pow(2.0, 0.5 * i.dim());
    for (int j = 0; j < i.dim(); ++j) v *= std::sin(i[static_cast<std::size_t>(j)] * std::numbers::pi * x[static_cast<std::size_t>(j)]);
    return v;
}

}  // namespace detail

/// Eigensystem of the Dirichlet inverse Laplacian on (0,1)^d, ||i||_inf <= max_index.
inline SvdSystem laplacian_system(int d, int max_index) {
    if (d < 1 || max_index < 1) throw DomainError("laplacian_system needs d >= 1 and max_index >= 1");
    std::map<MultiIndex, std::pair<double, long long>> values;
    for (auto& i : enumerate_cube(d, max_index)) {
        const long long s = i.sum_sq();
        values.emplace(i, std::pair<double, long long>{1.0 / static_cast<double>(s), s});
    }
    // Sorting on 1/sum_sq keeps ties exact; kappa gets the pi^2 factor afterwards.
    SvdSystem sys;
    sys.id = "laplacian-d" + std::to_string(d);
    sys.kind = BasisKind::laplacian;
    sys.d = d;
    sys.domain_dim = d;
    sys.p = 2.0;
    for (auto& e : sort_multiindexed(values)) {
        SingularTriple t;
        t.kappa = 1.0 / (std::numbers::pi * std::numbers::pi * static_cast<double>(e.payload));
        t.sign = -1;
        t.index = e.index;
        auto idx = e.index;
        t.h = [idx](std::span<const double> x) { return detail::tensor_sine(idx, x); };
        t.g = t.h;
        sys.triples.push_back(std::move(t));
    }
    return sys;
}

/// Singular system of the Volterra operator Kv(x) = int_0^x v.
inline SvdSystem volterra_system(int max_index) {
    if (max_index < 1) throw DomainError("volterra_system needs max_index >= 1");
    SvdSystem sys;
    sys.id = "volterra";
    sys.kind = BasisKind::volterra;
    sys.p = 1.0;
    for (int i = 1; i <= max_index; ++i) {
        const double w = (i - 0.5) * std::numbers::pi;
        SingularTriple t;
        t.kappa = 1.0 / w;
        t.sign = 1;
        t.index = MultiIndex{i};
        t.h = [w](std::span<const double> x) { return std::numbers::sqrt2 * std::cos(w * x[0]); };
        t.g = [w](std::span<const double> x) { return std::numbers::sqrt2 * std::sin(w * x[0]); };
        sys.triples.push_back(std::move(t));
    }
    return sys;
}

enum class Darcy1dBoundary { dirichlet, mixed };

/// Singular system of the one-dimensional Darcy operator.
/// Dirichlet: Kv(x) = int_0^x v - x int_0^1 v. Mixed: the Volterra operator,
/// indexed so that position l carries frequency (l - 1/2) pi.
inline SvdSystem darcy1d_system(int max_index, Darcy1dBoundary boundary) {
    if (max_index < 1) throw DomainError("darcy1d_system needs max_index >= 1");
    SvdSystem sys;
    sys.p = 1.0;
    if (boundary == Darcy1dBoundary::mixed) {
        sys = volterra_system(max_index);
        sys.id = "darcy1d-mixed";
        sys.kind = BasisKind::darcy_mixed;
        return sys;
    }
    sys.id = "darcy1d-dirichlet";
    sys.kind = BasisKind::darcy_dirichlet;
    for (int i = 1; i <= max_index; ++i) {
        const double w = i * std::numbers::pi;
        SingularTriple t;
        t.kappa = 1.0 / w;
        t.sign = 1;
        t.index = MultiIndex{i};
        t.h = [w](std::span<const double> x) { return std::numbers::sqrt2 * std::cos(w * x[0]); };
        t.g = [w](std::span<const double> x) { return std::numbers::sqrt2 * std::sin(w * x[0]); };
        sys.triples.push_back(std::move(t));
    }
    return sys;
}

/// Placeholder for bases without an implementation (B-splines, wavelets).
[[noreturn]] inline SvdSystem unavailable_system(const std::string& name) {
    throw ConfigError("basis unavailable: " + name);
}

/// sum_l v_l h_l(x).
inline double evaluate(const CoeffSeq& v, const SvdSystem& sys, std::span<const double> x) {
    sys.check_point(x);
    if (v.coeffs.size() > sys.size()) throw DimensionError("evaluate: sequence longer than basis");
    double acc = 0.0;
    for (std::size_t l = 0; l < v.coeffs.size(); ++l)
        if (v.coeffs[l] != 0.0) acc += v.coeffs[l] * sys.triples[l].h(x);
    return acc;
}

/// sum_l sign_l kappa_l v_l g_l(x), i.e. (Kv)(x) for v given in h-coordinates.
inline double evaluate_K(const CoeffSeq& v, const SvdSystem& sys, std::span<const double> x) {
    sys.check_point(x);
    if (v.coeffs.size() > sys.size()) throw DimensionError("evaluate_K: sequence longer than basis");
    double acc = 0.0;
    for (std::size_t l = 0; l < v.coeffs.size(); ++l)
        if (v.coeffs[l] != 0.0) acc += sys.triples[l].sign * sys.triples[l].kappa * v.coeffs[l] * sys.triples[l].g(x);
    return acc;
}

/// Matrix B with B(l, j) = h_l(points[j]) (or g_l when `left` is set), for the first N triples.
inline Eigen::MatrixXd basis_matrix(const SvdSystem& sys, std::size_t N, const std::vector<std::vector<double>>& points,
                                    bool left = false) {
    if (N > sys.size()) throw DimensionError("basis_matrix: N exceeds basis size");
    Eigen::MatrixXd B(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(points.size()));
    for (std::size_t j = 0; j < points.size(); ++j) {
        sys.check_point(points[j]);
        for (std::size_t l = 0; l < N; ++l)
            B(static_cast<Eigen::Index>(l), static_cast<Eigen::Index>(j)) =
                left ? sys.triples[l].g(points[j]) : sys.triples[l].h(points[j]);
    }
    return B;
}

/// Exports `ell,kappa,sign,index_tuple`.
inline void write_system_csv(const std::filesystem::path& path, const SvdSystem& sys) {
    std::string out = "ell,kappa,sign,index_tuple\n";
    for (std::size_t l = 0; l < sys.size(); ++l) {
        const auto& t = sys.triples[l];
        out += std::to_string(l + 1) + ',' + io::format_double(t.kappa) + ',' + std::to_string(t.sign) + ',' +
               t.index.to_string() + '\n';
    }
    io::write_atomic(path, out);
}

// ---------------------------------------------------------------------------
// Heat equation eigensystem of K^T K on (0,1)^d x (0,1).

struct HeatEigenPair {
    MultiIndex i;
    int k = 1;
    double mu = 0.0;
    double nu = 0.0;
    double lambda = 0.0;
};

/// Root of nu / tan(nu) = -mu / 2 in ((k - 1/2) pi, k pi).
///
/// Bisection on G(nu) = nu - k pi + atan(2 nu / mu), which is increasing on the
/// bracket and has the same root but no pole at k pi.
inline double heat_root(double mu, int k) {
    if (k < 1 || !(mu >= 0.0)) throw DomainError("heat_root needs k >= 1 and mu >= 0");
    const double pi = std::numbers::pi;
    auto G = [&](double nu) { return nu - k * pi + (mu == 0.0 ? pi / 2 : std::atan(2.0 * nu / mu)); };
    double lo = (k - 0.5) * pi;
    double hi = k * pi;
    if (!(G(lo) <= 0.0 && G(hi) >= 0.0)) throw NumericalError("heat_root: bracket does not contain a root");
    for (int it = 0; it < 200 && hi - lo > 0.0; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        if (G(mid) < 0.0)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

/// Normalized eigenfunction h_{i,k}(x, t); x = point[0..d-1], t = point[d].
inline double heat_eigenfunction(const HeatEigenPair& e, std::span<const double> point) {
    const int d = e.i.dim();
    const double nu = e.nu;
    const double t = point[static_cast<std::size_t>(d)];
    const double tn = std::tan(nu);
    const double sn = std::sin(nu);
    const double norm = std::sqrt((-1.0 / tn + nu / (sn * sn)) / (2.0 * nu));
    const double time_part = (-std::sin(nu * t) / tn + std::cos(nu * t)) / norm;
    return time_part * detail::tensor_sine(e.i, point.first(static_cast<std::size_t>(d)));
}

struct HeatEigensystem {
    int d = 1;
    std::vector<HeatEigenPair> pairs;  ///< decreasing lambda

    PointFn eigenfunction(std::size_t l) const {
        auto e = pairs.at(l);
        return [e](std::span<const double> x) { return heat_eigenfunction(e, x); };
    }
};

inline HeatEigensystem heat_eigensystem(int d, int max_space, int max_time) {
    if (d < 1 || max_space < 1 || max_time < 1) throw DomainError("heat_eigensystem arguments must be >= 1");
    const double pi2 = std::numbers::pi * std::numbers::pi;
    // Key (i..., k) keeps the tie order lexicographic in space index then k.
    std::map<MultiIndex, std::pair<double, HeatEigenPair>> values;
    for (auto& i : enumerate_cube(d, max_space)) {
        const double mu = pi2 * static_cast<double>(i.sum_sq());
        for (int k = 1; k <= max_time; ++k) {
            HeatEigenPair e;
            e.i = i;
            e.k = k;
            e.mu = mu;
            e.nu = heat_root(mu, k);
            e.lambda = 1.0 / (e.nu * e.nu + mu * mu / 4.0);
            auto key = i.entries();
            key.push_back(k);
            values.emplace(MultiIndex(key), std::pair<double, HeatEigenPair>{e.lambda, e});
        }
    }
    HeatEigensystem sys;
    sys.d = d;
    for (auto& s : sort_multiindexed(values)) sys.pairs.push_back(s.payload);
    return sys;
}

// ---------------------------------------------------------------------------
// Numerical SVD of an operator given on quadrature nodes.

struct QuadratureGrid {
    std::vector<std::vector<double>> points;
    std::vector<double> weights;
};

/// Trapezoid grid on [0,1] with `intervals` subintervals.
inline QuadratureGrid trapezoid_grid(int intervals) {
    QuadratureGrid q;
    const double h = 1.0 / intervals;
    for (int j = 0; j <= intervals; ++j) {
        q.points.push_back({j * h});
        q.weights.push_back((j == 0 || j == intervals) ? h / 2 : h);
    }
    return q;
}

struct DiscreteSvd {
    SvdSystem system;
    Eigen::MatrixXd h_nodes;  ///< column l = h_l at the nodes
    Eigen::MatrixXd g_nodes;  ///< column l = g_l at the nodes
    double p_estimate = 0.0;
};

namespace detail {

inline PointFn node_interpolant(std::shared_ptr<const QuadratureGrid> grid, Eigen::VectorXd values) {
    return [grid, values = std::move(values)](std::span<const double> x) {
        const auto& pts = grid->points;
        if (pts.front().size() == 1) {
            // Piecewise linear along the sorted nodes, constant outside them.
            if (x[0] <= pts.front()[0]) return values(0);
            if (x[0] >= pts.back()[0]) return values(static_cast<Eigen::Index>(pts.size() - 1));
            std::size_t lo = 0, hi = pts.size() - 1;
            while (hi - lo > 1) {
                auto mid = (lo + hi) / 2;
                (pts[mid][0] <= x[0] ? lo : hi) = mid;
            }
            const double s = (x[0] - pts[lo][0]) / (pts[hi][0] - pts[lo][0]);
            return (1 - s) * values(static_cast<Eigen::Index>(lo)) + s * values(static_cast<Eigen::Index>(hi));
        }
        std::size_t best = 0;
        double bd = INFINITY;
        for (std::size_t j = 0; j < pts.size(); ++j) {
            double dd = 0;
            for (std::size_t c = 0; c < x.size(); ++c) dd += (pts[j][c] - x[c]) * (pts[j][c] - x[c]);
            if (dd < bd) bd = dd, best = j;
        }
        return values(static_cast<Eigen::Index>(best));
    };
}

}  // namespace detail

/// SVD of a quadrature-weighted operator matrix: (Kv)(x_i) ~ sum_j A(i,j) v(x_j).
///
/// Works in the weighted inner product sum_j w_j u_j v_j, so the returned nodal
/// singular functions are orthonormal in that inner product. When g_l = +-h_l
/// (self-adjoint case) the sign is reported and g is set equal to h.
inline DiscreteSvd discrete_svd(const Eigen::MatrixXd& A, const QuadratureGrid& grid, int d = 1) {
    const auto n = static_cast<Eigen::Index>(grid.weights.size());
    if (A.rows() != n || A.cols() != n) throw DimensionError("discrete_svd: matrix shape does not match grid");
    Eigen::VectorXd sw(n);
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!(grid.weights[static_cast<std::size_t>(j)] > 0.0)) throw DomainError("discrete_svd: weights must be positive");
        sw(j) = std::sqrt(grid.weights[static_cast<std::size_t>(j)]);
    }
    Eigen::MatrixXd B = sw.asDiagonal() * A * sw.cwiseInverse().asDiagonal();
    if (!B.allFinite()) throw NumericalError("discrete_svd: non-finite matrix entries");
    Eigen::BDCSVD<Eigen::MatrixXd> svd(B, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success) throw NumericalError("discrete_svd: SVD did not converge");

    DiscreteSvd out;
    out.h_nodes = sw.cwiseInverse().asDiagonal() * svd.matrixV();
    out.g_nodes = sw.cwiseInverse().asDiagonal() * svd.matrixU();
    auto shared_grid = std::make_shared<const QuadratureGrid>(grid);
    auto& sys = out.system;
    sys.id = "discrete";
    sys.kind = BasisKind::discrete;
    sys.d = d;
    sys.domain_dim = static_cast<int>(grid.points.front().size());
    const auto& s = svd.singularValues();
    for (Eigen::Index l = 0; l < s.size(); ++l) {
        if (!(s(l) > 0.0)) break;
        SingularTriple t;
        t.kappa = s(l);
        t.index = MultiIndex{static_cast<int>(l + 1)};
        const double overlap = svd.matrixU().col(l).dot(svd.matrixV().col(l));
        if (std::abs(std::abs(overlap) - 1.0) < 1e-8) {
            t.sign = overlap > 0 ? 1 : -1;
            out.g_nodes.col(l) = out.h_nodes.col(l);
        }
        t.h = detail::node_interpolant(shared_grid, out.h_nodes.col(l));
        t.g = detail::node_interpolant(shared_grid, out.g_nodes.col(l));
        sys.triples.push_back(std::move(t));
    }
    // Log-log slope of kappa over the leading quarter of the spectrum.
    const auto m = std::max<std::size_t>(2, sys.size() / 4);
    if (sys.size() >= 2) {
        double sx = 0, sy = 0, sxx = 0, sxy = 0;
        const auto cnt = std::min(m, sys.size());
        for (std::size_t l = 0; l < cnt; ++l) {
            const double X = std::log(static_cast<double>(l + 1));
            const double Y = std::log(sys.triples[l].kappa);
            sx += X, sy += Y, sxx += X * X, sxy += X * Y;
        }
        const double slope = (cnt * sxy - sx * sy) / (cnt * sxx - sx * sx);
        out.p_estimate = -slope * d;
    }
    sys.p = out.p_estimate;
    return out;
}

}  // namespace pdelin
