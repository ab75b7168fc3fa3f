#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bases.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "inference.hpp"
#include "io.hpp"
#include "seqspace.hpp"

namespace pdelin {

/// Noisy point evaluations y_j = u(x_j) + Z_j on the design grid (2i/(2m+1))^d.
struct DesignObservation {
    int d = 1;
    int m = 1;
    std::vector<std::vector<double>> points;
    std::vector<double> y;

    std::size_t n() const noexcept { return y.size(); }
};

/// Design points in row-major order (last coordinate fastest).
inline std::vector<std::vector<double>> design_points(int m, int d) {
    auto g = Grid::design_grid(m, d);
    std::vector<std::vector<double>> pts(g.size());
    for (std::size_t i = 0; i < pts.size(); ++i) pts[i] = g.point(i);
    return pts;
}

/// Y_l = |kappa_l| v0_l + Z_l / sqrt(n).
inline SeqObservation simulate_whitenoise(const CoeffSeq& v0, const SvdSystem& sys, double n, std::uint64_t seed) {
    if (v0.truncation() > sys.size()) throw DimensionError("simulate_whitenoise: sequence longer than basis");
    if (!(n > 0.0)) throw DomainError("simulate_whitenoise: n must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    const double sd = 1.0 / std::sqrt(n);
    std::vector<double> y(v0.truncation());
    for (std::size_t l = 0; l < y.size(); ++l) y[l] = std::abs(sys.triples[l].kappa) * v0.coeffs[l] + sd * z(rng);
    return make_seq_observation(std::move(y), n, sys);
}

inline DesignObservation simulate_design(const std::function<double(std::span<const double>)>& u, int m, int d,
                                         std::uint64_t seed, bool noiseless = false) {
    if (m < 1) throw DomainError("simulate_design: m must be >= 1");
    DesignObservation obs;
    obs.d = d;
    obs.m = m;
    obs.points = design_points(m, d);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    obs.y.resize(obs.points.size());
    for (std::size_t j = 0; j < obs.points.size(); ++j) obs.y[j] = u(obs.points[j]) + (noiseless ? 0.0 : z(rng));
    return obs;
}

/// Empirical inner product <a, b>_{L_n} = (1/n) sum_j a(x_j) b(x_j).
inline double empirical_inner(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.empty()) throw DimensionError("empirical_inner: size mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
    return s / static_cast<double>(a.size());
}

/// (1 + 1/(2m))^d, the diagonal of the sine-basis Gram matrix on the design grid.
inline double design_gram_factor(int m, int d) { return std::pow(1.0 + 1.0 / (2.0 * m), d); }

namespace detail {

inline void require_sine_basis(const SvdSystem& sys, int d) {
    if (sys.kind != BasisKind::laplacian) throw DomainError("exact interpolation needs the sine (Laplacian) basis");
    if (sys.d != d) throw DimensionError("basis dimension does not match the design");
}

/// Raw empirical projections <values, h_l>_{L_n} for every basis element with ||i||_inf <= m.
inline std::vector<double> empirical_projections(const std::vector<double>& values, const SvdSystem& sys, int m, int d) {
    const auto n = static_cast<std::size_t>(std::pow(m, d));
    if (values.size() != n) throw DimensionError("values do not match the design grid size m^d");
    // sin(i pi x_k) for every axis frequency i and design coordinate k.
    std::vector<std::vector<double>> S(static_cast<std::size_t>(m) + 1, std::vector<double>(static_cast<std::size_t>(m)));
    for (int i = 1; i <= m; ++i)
        for (int k = 1; k <= m; ++k)
            S[static_cast<std::size_t>(i)][static_cast<std::size_t>(k - 1)] = std::sin(i * std::numbers::pi * 2.0 * k / (2.0 * m + 1.0));
    const double amp = std::pow(2.0, 0.5 * d);
    std::vector<double> out(sys.size(), 0.0);
    std::vector<std::size_t> k(static_cast<std::size_t>(d));
    for (std::size_t l = 0; l < sys.size(); ++l) {
        const auto& idx = sys.triples[l].index;
        if (idx.max_norm() > m) continue;
        double acc = 0.0;
        std::fill(k.begin(), k.end(), 0);
        for (std::size_t j = 0; j < n; ++j) {
            double h = amp;
            for (int a = 0; a < d; ++a) h *= S[static_cast<std::size_t>(idx[static_cast<std::size_t>(a)])][k[static_cast<std::size_t>(a)]];
            acc += values[j] * h;
            for (int a = d - 1; a >= 0; --a) {
                if (++k[static_cast<std::size_t>(a)] < static_cast<std::size_t>(m)) break;
                k[static_cast<std::size_t>(a)] = 0;
            }
        }
        out[l] = acc / static_cast<double>(n);
    }
    return out;
}

}  // namespace detail

/// Coefficients of the interpolant I_n v in span{h_i : ||i||_inf <= m}, aligned with
/// the basis order; entries outside the cube are zero.
inline CoeffSeq interpolate(const std::vector<double>& values, const SvdSystem& sys, int m) {
    const int d = sys.d;
    detail::require_sine_basis(sys, d);
    auto c = detail::empirical_projections(values, sys, m, d);
    const double gf = design_gram_factor(m, d);
    for (auto& x : c) x /= gf;
    return CoeffSeq{sys.id, d, std::move(c)};
}

inline CoeffSeq interpolate(const DesignObservation& obs, const SvdSystem& sys) {
    if (obs.d != sys.d) throw DimensionError("interpolate: design dimension does not match basis");
    return interpolate(obs.y, sys, obs.m);
}

/// Least-squares projection of arbitrary point data onto the first N basis functions.
/// `warning` is always set: only the canonical design grid interpolates exactly.
struct LeastSquaresProjection {
    CoeffSeq coeffs;
    bool warning = true;
};

inline LeastSquaresProjection project_least_squares(const std::vector<std::vector<double>>& points,
                                                    const std::vector<double>& y, const SvdSystem& sys, std::size_t N) {
    if (points.size() != y.size()) throw DimensionError("project_least_squares: points and values differ in length");
    if (points.size() < N) throw DimensionError("project_least_squares: fewer points than coefficients");
    Eigen::MatrixXd B = basis_matrix(sys, N, points).transpose();
    Eigen::VectorXd c = B.colPivHouseholderQr().solve(Eigen::Map<const Eigen::VectorXd>(y.data(), static_cast<Eigen::Index>(y.size())));
    if (!c.allFinite()) throw NumericalError("project_least_squares: singular design");
    return {CoeffSeq{sys.id, sys.d, std::vector<double>(c.data(), c.data() + c.size())}, true};
}

/// Sequence-space pseudo-observations from design data.
///
/// y (minus an optional offset such as the harmonic extension) is projected on
/// e_l = h_l / s with s = (1 + 1/(2m))^{d/2}, which is orthonormal in L_n, so the
/// noise has variance exactly 1/n per coordinate. For data Kv + noise with v in the
/// span, coordinate l is s |kappa_l| v_l + noise: the returned observation carries
/// kappa_l = s |kappa_l| and scale = s, and signs are folded into the data.
inline SeqObservation design_to_seq(const DesignObservation& obs, const SvdSystem& sys,
                                    const std::function<double(std::span<const double>)>& offset = {}) {
    if (obs.d != sys.d) throw DimensionError("design_to_seq: design dimension does not match basis");
    if (obs.points.size() != obs.y.size() || obs.n() != static_cast<std::size_t>(std::pow(obs.m, obs.d)))
        throw DimensionError("design_to_seq: observation is not on the canonical design grid");
    detail::require_sine_basis(sys, obs.d);
    std::vector<double> y = obs.y;
    if (offset)
        for (std::size_t j = 0; j < y.size(); ++j) y[j] -= offset(obs.points[j]);
    auto proj = detail::empirical_projections(y, sys, obs.m, obs.d);
    const double s = std::sqrt(design_gram_factor(obs.m, obs.d));
    SeqObservation out;
    out.n = static_cast<double>(obs.n());
    out.d = sys.d;
    out.p = sys.p;
    out.scale = s;
    out.basis_id = sys.id;
    for (std::size_t l = 0; l < sys.size(); ++l) {
        if (sys.triples[l].index.max_norm() > obs.m) continue;
        out.y.push_back(sys.triples[l].sign * proj[l] / s);
        out.kappa.push_back(s * std::abs(sys.triples[l].kappa));
        out.sign.push_back(sys.triples[l].sign);
    }
    return out;
}

// ---------------------------------------------------------------------------
// File formats.

inline void write_design_observation(const std::filesystem::path& path, const DesignObservation& obs) {
    std::vector<std::string> header;
    for (int a = 1; a <= obs.d; ++a) header.push_back("x" + std::to_string(a));
    header.push_back("y");
    io::CsvWriter w(header);
    for (std::size_t j = 0; j < obs.n(); ++j) {
        auto row = obs.points[j];
        row.push_back(obs.y[j]);
        w.row(row);
    }
    w.save(path);
}

inline DesignObservation read_design_observation(const std::filesystem::path& path) {
    auto t = io::read_csv(path);
    DesignObservation obs;
    obs.d = static_cast<int>(t.header.size()) - 1;
    if (obs.d < 1 || t.header.back() != "y") throw ConfigError(path.string() + ": expected columns x1..xd,y");
    for (int a = 1; a <= obs.d; ++a)
        if (t.header[static_cast<std::size_t>(a - 1)] != "x" + std::to_string(a))
            throw ConfigError(path.string() + ": expected columns x1..xd,y");
    for (auto& r : t.rows) {
        obs.y.push_back(r.back());
        r.pop_back();
        obs.points.push_back(r);
    }
    obs.m = static_cast<int>(std::lround(std::pow(static_cast<double>(obs.n()), 1.0 / obs.d)));
    if (static_cast<std::size_t>(std::pow(obs.m, obs.d)) != obs.n() || design_points(obs.m, obs.d).size() != obs.n())
        throw DimensionError(path.string() + ": point count is not m^d");
    auto expect = design_points(obs.m, obs.d);
    for (std::size_t j = 0; j < obs.n(); ++j)
        for (int a = 0; a < obs.d; ++a)
            if (std::abs(expect[j][static_cast<std::size_t>(a)] - obs.points[j][static_cast<std::size_t>(a)]) > 1e-12)
                throw DimensionError(path.string() + ": points are not the canonical design grid");
    return obs;
}

/// `ell,ytilde` CSV plus a JSON sidecar recording n, the basis id and scale.
inline void write_seq_observation(const std::filesystem::path& path, const SeqObservation& obs) {
    io::CsvWriter w({"ell", "ytilde"});
    for (std::size_t l = 0; l < obs.size(); ++l) w.row(l + 1, obs.y[l]);
    w.save(path);
    nlohmann::ordered_json meta;
    meta["n"] = obs.n;
    meta["basis_id"] = obs.basis_id;
    meta["d"] = obs.d;
    meta["p"] = obs.p;
    meta["scale"] = obs.scale;
    meta["N"] = obs.size();
    auto json_path = path;
    json_path.replace_extension(".json");
    io::write_atomic(json_path, meta.dump(2) + "\n");
}

/// Reads data written by write_seq_observation and attaches kappas from `sys`.
inline SeqObservation read_seq_observation(const std::filesystem::path& path, const SvdSystem& sys) {
    auto json_path = path;
    json_path.replace_extension(".json");
    double n = 0, scale = 1;
    try {
        auto meta = nlohmann::json::parse(io::read_text(json_path));
        n = meta.at("n").get<double>();
        scale = meta.value("scale", 1.0);
        if (meta.contains("basis_id") && meta["basis_id"].get<std::string>() != sys.id)
            throw ConfigError(json_path.string() + ": data basis `" + meta["basis_id"].get<std::string>() +
                              "` does not match `" + sys.id + "`");
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(json_path.string() + ": " + e.what());
    }
    auto t = io::read_csv(path);
    const auto cy = t.column("ytilde");
    std::vector<double> y;
    for (const auto& r : t.rows) y.push_back(r[cy]);
    auto obs = make_seq_observation(std::move(y), n, sys);
    obs.scale = scale;
    for (auto& k : obs.kappa) k *= scale;
    return obs;
}

}  // namespace pdelin
