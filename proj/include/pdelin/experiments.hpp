#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "bases.hpp"
#include "config.hpp"
#include "darcy.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "inference.hpp"
#include "io.hpp"
#include "observe.hpp"
#include "parallel.hpp"
#include "pdes.hpp"

namespace pdelin {

enum class PriorMode { fixed, eb, hb };

inline PriorMode parse_prior_mode(const std::string& s) {
    if (s == "fixed") return PriorMode::fixed;
    if (s == "eb") return PriorMode::eb;
    if (s == "hb") return PriorMode::hb;
    throw ConfigError("unknown prior mode '" + s + "' (expected fixed, eb or hb)");
}

inline std::string prior_mode_name(PriorMode m) {
    switch (m) {
        case PriorMode::fixed: return "fixed";
        case PriorMode::eb: return "eb";
        case PriorMode::hb: return "hb";
    }
    return "?";
}

inline const std::vector<std::string>& figure_cases() {
    static const std::vector<std::string> names{"schrodinger-1d-smooth", "schrodinger-1d-bump", "schrodinger-1d-boundary",
                                                "schrodinger-2d", "schrodinger-1d-spline"};
    return names;
}

inline const std::vector<std::string>& study_names() {
    static const std::vector<std::string> names{"figure", "contraction", "coverage", "darcy-refinement"};
    return names;
}

struct ExperimentConfig {
    std::string study = "figure";
    std::string name = "schrodinger-1d-smooth";
    std::vector<double> n_list{1e4, 1e6, 1e8, 1e10};
    PriorMode prior = PriorMode::eb;
    double alpha = 1.0;  ///< prior smoothness in fixed mode
    double beta = 1.0;   ///< truth smoothness for the Volterra studies
    int draws = 500;
    double level = 0.95;
    std::uint64_t seed = 0;
    std::filesystem::path output;
    int reps = 50;
    int intervals = 1024;  ///< band grid intervals per axis, 1-D
    int m = 63;            ///< band grid for d = 2 is the uniform grid with m + 1 intervals
    double delta0 = 0.0;   ///< denominator floor; 0 estimates it from the posterior mean
    int kept_draws = 20;
    std::size_t max_truncation = 0;  ///< 0 uses the default rule (2048 cap for d = 2)
    std::vector<double> alphas{0.5, 2.0};
    std::vector<double> inflations{1.0, 2.0};
    int radius_draws = 2000;
    double misspecified_alpha = 3.0;
    double noiseless_n = 1e12;
    int truth_terms = 4096;
    std::vector<double> deltas{1.0 / 32, 1.0 / 64, 1.0 / 128};
    int bootstrap = 1000;

    void validate() const {
        if (std::find(study_names().begin(), study_names().end(), study) == study_names().end())
            throw ConfigError("unknown study '" + study + "'");
        if (study == "figure" && std::find(figure_cases().begin(), figure_cases().end(), name) == figure_cases().end())
            throw ConfigError("unknown figure case '" + name + "'");
        for (double n : n_list)
            if (!(n > 1.0)) throw ConfigError("experiment n values must exceed 1");
        if (n_list.empty()) throw ConfigError("experiment needs at least one n");
        if (draws < 2) throw ConfigError("experiment draws must be >= 2");
        if (!(level > 0.0 && level < 1.0)) throw ConfigError("experiment level must lie in (0,1)");
        if (reps < 1) throw ConfigError("experiment reps must be >= 1");
        if (intervals < 4 || m < 3) throw ConfigError("experiment grid too coarse");
        if (!(delta0 >= 0.0)) throw ConfigError("delta0 must be >= 0");
        for (double c : inflations)
            if (!(c >= 1.0)) throw ConfigError("inflation factors must be >= 1");
        for (double d : deltas)
            if (!(d > 0.0 && d < 1.0)) throw ConfigError("darcy refinement deltas must lie in (0,1)");
    }
};

/// Defaults for a study, before any config overrides.
inline ExperimentConfig default_experiment(const std::string& study, const std::string& name = {}) {
    ExperimentConfig c;
    c.study = study;
    if (study == "figure") {
        if (!name.empty()) c.name = name;
    } else if (study == "contraction") {
        c.name = "volterra";
        c.n_list = {1e4, 1e5, 1e6, 1e7};
        c.prior = PriorMode::fixed;
        c.alpha = 1.0;
        c.draws = 100;
        c.reps = 50;
    } else if (study == "coverage") {
        c.name = "volterra";
        c.n_list = {1e6};
        c.prior = PriorMode::fixed;
        c.reps = 200;
    } else if (study == "darcy-refinement") {
        c.name = "manufactured";
    }
    return c;
}

/// Applies the `[experiment]` section of a config on top of the study defaults.
inline ExperimentConfig experiment_from_config(const Config& cfg, const std::string& study, const std::string& name) {
    auto c = default_experiment(study, name);
    const std::string s = "experiment.";
    if (cfg.has(s + "study") && cfg.get_string(s + "study") != study)
        throw ConfigError(cfg.where(s + "study") + ": config is for study '" + cfg.get_string(s + "study") + "'");
    if (cfg.has(s + "name") && name.empty()) c.name = cfg.get_string(s + "name");
    c.n_list = cfg.get_doubles(s + "n", c.n_list);
    if (cfg.has(s + "prior")) c.prior = parse_prior_mode(cfg.get_string(s + "prior"));
    c.alpha = cfg.get_double(s + "alpha", c.alpha);
    c.beta = cfg.get_double(s + "beta", c.beta);
    c.draws = static_cast<int>(cfg.get_int(s + "draws", c.draws));
    c.level = cfg.get_double(s + "level", c.level);
    c.seed = cfg.get_seed(s + "seed", c.seed);
    c.reps = static_cast<int>(cfg.get_int(s + "reps", c.reps));
    c.intervals = static_cast<int>(cfg.get_int(s + "intervals", c.intervals));
    c.m = static_cast<int>(cfg.get_int(s + "m", c.m));
    c.delta0 = cfg.get_double(s + "delta0", c.delta0);
    c.kept_draws = static_cast<int>(cfg.get_int(s + "kept_draws", c.kept_draws));
    c.max_truncation = static_cast<std::size_t>(cfg.get_int(s + "max_truncation", static_cast<long long>(c.max_truncation)));
    c.alphas = cfg.get_doubles(s + "alphas", c.alphas);
    c.inflations = cfg.get_doubles(s + "inflations", c.inflations);
    c.radius_draws = static_cast<int>(cfg.get_int(s + "radius_draws", c.radius_draws));
    c.misspecified_alpha = cfg.get_double(s + "misspecified_alpha", c.misspecified_alpha);
    c.noiseless_n = cfg.get_double(s + "noiseless_n", c.noiseless_n);
    c.truth_terms = static_cast<int>(cfg.get_int(s + "truth_terms", c.truth_terms));
    c.deltas = cfg.get_doubles(s + "deltas", c.deltas);
    c.bootstrap = static_cast<int>(cfg.get_int(s + "bootstrap", c.bootstrap));
    if (cfg.has(s + "output")) c.output = cfg.get_string(s + "output");
    c.validate();
    return c;
}

/// Independent stream seeds derived from a base seed.
inline std::uint64_t splitmix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index) {
    return splitmix(splitmix(splitmix(base) ^ stream) ^ index);
}

// ---------------------------------------------------------------------------
// Sequence-model cases

/// A truth, its basis and the nodal matrices needed to push coefficient draws
/// through the solution operator on a band grid.
struct SequenceCase {
    std::string name;
    Family family = Family::schrodinger;
    int d = 1;
    SvdSystem sys;
    Grid grid;
    std::vector<double> v0;      ///< truth in h-coordinates
    std::vector<double> f0;      ///< truth at the nodes
    std::vector<double> gtilde;  ///< at the nodes
    Eigen::MatrixXd H;           ///< H(l, j) = h_l(node j)
    Eigen::MatrixXd KH;          ///< KH(l, j) = sign_l kappa_l g_l(node j)
    double divisor = 2.0;        ///< e(v) = v / (divisor (Kv + g~))

    std::size_t rows() const noexcept { return static_cast<std::size_t>(H.rows()); }

    /// Squared L2 norm of the truth beyond the first N coefficients.
    double tail_sq(std::size_t N) const {
        double s = 0.0;
        for (std::size_t l = N; l < v0.size(); ++l) s += v0[l] * v0[l];
        return s;
    }
};

namespace detail {

inline void fill_nodal(SequenceCase& c, std::size_t rows) {
    rows = std::min(rows, c.sys.size());
    const auto M = static_cast<Eigen::Index>(c.grid.size());
    c.H.resize(static_cast<Eigen::Index>(rows), M);
    c.KH.resize(static_cast<Eigen::Index>(rows), M);
    parallel_for(c.grid.size(), [&](std::size_t j) {
        const auto x = c.grid.point(j);
        for (std::size_t l = 0; l < rows; ++l) {
            const auto& t = c.sys.triples[l];
            const auto L = static_cast<Eigen::Index>(l), J = static_cast<Eigen::Index>(j);
            c.H(L, J) = t.h(x);
            c.KH(L, J) = t.sign * t.kappa * t.g(x);
        }
    });
}

inline std::vector<double> smooth_truth_coeffs(int terms) {
    std::vector<double> a(static_cast<std::size_t>(terms));
    for (int i = 1; i <= terms; ++i) a[static_cast<std::size_t>(i - 1)] = std::pow(i, -1.5) * std::sin(static_cast<double>(i));
    return a;
}

/// sum_i a_i sqrt(2) sin(i pi x) by the angle recurrence.
inline double smooth_truth(double x, const std::vector<double>& a) {
    const double th = std::numbers::pi * x;
    const double c2 = 2.0 * std::cos(th);
    double s_prev = 0.0, s_cur = std::sin(th), acc = 0.0;
    for (double ai : a) {
        acc += ai * s_cur;
        const double s_next = c2 * s_cur - s_prev;
        s_prev = s_cur, s_cur = s_next;
    }
    return std::numbers::sqrt2 * acc;
}

inline std::vector<double> trapezoid_weights(std::size_t nodes) {
    std::vector<double> w(nodes, 1.0 / static_cast<double>(nodes - 1));
    w.front() *= 0.5;
    w.back() *= 0.5;
    return w;
}

}  // namespace detail

/// Schrödinger d = 1 cases on the eigenbasis of the Dirichlet Laplacian, with
/// g(0) = 1, g(1) = 2. Truth coefficients of v0 = 2 f0 u0 come from a 2^14-interval
/// forward solve and trapezoid quadrature.
inline SequenceCase schrodinger_1d_case(const std::string& name, std::size_t coeffs, int intervals = 1024,
                                        int smooth_terms = 1 << 15) {
    std::function<double(double)> f;
    if (name == "schrodinger-1d-smooth")
        f = [a = detail::smooth_truth_coeffs(smooth_terms)](double x) { return detail::smooth_truth(x, a); };
    else if (name == "schrodinger-1d-bump")
        f = [](double x) { return 1 - 4 * (x - 0.5) * (x - 0.5) - 0.75 * std::exp(-500 * (x - 0.5) * (x - 0.5)); };
    else if (name == "schrodinger-1d-boundary")
        f = [](double x) { return 1 + std::sin(3 * std::numbers::pi * x); };
    else if (name == "schrodinger-1d-spline")
        unavailable_system("bspline");
    else
        throw ConfigError("unknown Schrödinger case '" + name + "'");

    SequenceCase c;
    c.name = name;
    c.family = Family::schrodinger;
    c.d = 1;
    c.divisor = 2.0;
    c.sys = laplacian_system(1, static_cast<int>(coeffs));
    c.grid = Grid::uniform({intervals});

    ProblemSpec spec;
    spec.family = Family::schrodinger;
    spec.g = [](std::span<const double> x) { return 1.0 + x[0]; };
    const int fine = 1 << 14;
    Grid fg = Grid::uniform({fine});
    std::vector<double> fvals(fg.size());
    parallel_for(fg.size(), [&](std::size_t i) { fvals[i] = f(fg.axes[0][i]); });
    // The Schrödinger solve samples f at the nodes only.
    auto u = forward_solve(
        spec, [&](std::span<const double> x) { return fvals[static_cast<std::size_t>(std::lround(x[0] * fine))]; }, fg);
    std::vector<double> v(fg.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 2.0 * fvals[i] * u[i];
    const auto w = detail::trapezoid_weights(fg.size());
    c.v0.assign(c.sys.size(), 0.0);
    parallel_for(c.sys.size(), [&](std::size_t l) {
        const double k = static_cast<double>(l + 1) * std::numbers::pi;
        double s = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) s += w[i] * v[i] * std::sin(k * fg.axes[0][i]);
        c.v0[l] = std::numbers::sqrt2 * s;
    });
    c.f0.resize(c.grid.size());
    c.gtilde.resize(c.grid.size());
    parallel_for(c.grid.size(), [&](std::size_t j) {
        const double x = c.grid.axes[0][j];
        c.f0[j] = f(x);
        c.gtilde[j] = 1.0 + x;
    });
    detail::fill_nodal(c, c.sys.size());
    return c;
}

/// Schrödinger d = 2 case with the product truth and the trigonometric boundary
/// data. Truth coefficients use a 256^2 forward solve and a separable trapezoid
/// transform; the band grid is uniform with m + 1 intervals per axis.
inline SequenceCase schrodinger_2d_case(int m, std::size_t coeffs) {
    using std::numbers::pi;
    auto f = [](double x, double y) {
        return 2 * x * (x - 1) * y * (y - 1) * (2 + std::sin(3 * pi * x) * std::sin(pi * y));
    };
    auto g = [](double x, double y) { return 3 + x * y * y + 2 * y * std::sin(2 * pi * x) + x * std::cos(3 * pi * y); };

    SequenceCase c;
    c.name = "schrodinger-2d";
    c.family = Family::schrodinger;
    c.d = 2;
    c.divisor = 2.0;
    c.sys = laplacian_system(2, m);
    coeffs = std::min(coeffs, c.sys.size());
    c.sys.triples.resize(coeffs);
    c.grid = Grid::uniform({m + 1, m + 1});

    ProblemSpec spec;
    spec.family = Family::schrodinger;
    spec.d = 2;
    spec.g = [g](std::span<const double> p) { return g(p[0], p[1]); };
    const int fine = 256;
    Grid fg = Grid::uniform({fine, fine});
    const std::size_t F = fg.nodes(0);
    auto fgrid = GridFunction::sample(fg, [f](std::span<const double> p) { return f(p[0], p[1]); });
    auto u = forward_solve(spec, [f](std::span<const double> p) { return f(p[0], p[1]); }, fg);
    const auto w = detail::trapezoid_weights(F);
    // A(i, y) = sum_x w_x v(x, y) h_i(x), then B(i, j) = sum_y w_y A(i, y) h_j(y).
    Eigen::MatrixXd S(m, static_cast<Eigen::Index>(F));
    for (int i = 0; i < m; ++i)
        for (std::size_t x = 0; x < F; ++x)
            S(i, static_cast<Eigen::Index>(x)) = std::numbers::sqrt2 * std::sin((i + 1) * pi * fg.axes[0][x]) * w[x];
    Eigen::MatrixXd V(static_cast<Eigen::Index>(F), static_cast<Eigen::Index>(F));
    for (std::size_t k = 0; k < fg.size(); ++k)
        V(static_cast<Eigen::Index>(k / F), static_cast<Eigen::Index>(k % F)) = 2.0 * fgrid[k] * u[k];
    Eigen::MatrixXd B = S * V * S.transpose();
    c.v0.resize(coeffs);
    for (std::size_t l = 0; l < coeffs; ++l) {
        const auto& idx = c.sys.triples[l].index;
        c.v0[l] = B(static_cast<Eigen::Index>(idx[0] - 1), static_cast<Eigen::Index>(idx[1] - 1));
    }
    c.f0.resize(c.grid.size());
    c.gtilde = harmonic_extension(spec, c.grid).values;
    for (std::size_t j = 0; j < c.grid.size(); ++j) {
        const auto p = c.grid.point(j);
        c.f0[j] = f(p[0], p[1]);
    }
    detail::fill_nodal(c, coeffs);
    return c;
}

/// Volterra case u' = f u, u(0) = 1, with truth v0_l = l^{-beta - 1/2 - 0.01} on
/// the cosine basis, truncated at `terms`. Nodal matrices cover `rows` coefficients.
inline SequenceCase volterra_case(double beta, int terms, std::size_t rows, int intervals = 1024) {
    SequenceCase c;
    c.name = "volterra";
    c.family = Family::volterra;
    c.d = 1;
    c.divisor = 1.0;
    c.sys = volterra_system(terms);
    c.grid = Grid::uniform({intervals});
    c.v0.resize(static_cast<std::size_t>(terms));
    for (int l = 1; l <= terms; ++l) c.v0[static_cast<std::size_t>(l - 1)] = std::pow(l, -beta - 0.51);
    c.f0.resize(c.grid.size());
    c.gtilde.assign(c.grid.size(), 1.0);
    parallel_for(c.grid.size(), [&](std::size_t j) {
        const double x = c.grid.axes[0][j];
        double v = 0.0, kv = 0.0;
        for (int l = 1; l <= terms; ++l) {
            const double w = (l - 0.5) * std::numbers::pi;
            v += c.v0[static_cast<std::size_t>(l - 1)] * std::cos(w * x);
            kv += c.v0[static_cast<std::size_t>(l - 1)] * std::sin(w * x) / w;
        }
        c.f0[j] = std::numbers::sqrt2 * v / (std::numbers::sqrt2 * kv + 1.0);
    });
    detail::fill_nodal(c, std::min<std::size_t>(rows, static_cast<std::size_t>(terms)));
    return c;
}

/// Truncation level used at noise level n.
inline std::size_t case_truncation(const SequenceCase& c, double n, std::size_t cap = 0) {
    std::size_t N = default_truncation(n, c.d, c.sys.p);
    if (cap) N = std::min(N, cap);
    return std::min(N, c.rows());
}

/// Sequence data from the truth: Y_l = kappa_l v0_l + Z_l / sqrt(n), l <= N.
inline SeqObservation simulate_case(const SequenceCase& c, double n, std::size_t N, std::uint64_t seed,
                                    bool noiseless = false) {
    CoeffSeq v{c.sys.id, c.d, std::vector<double>(c.v0.begin(), c.v0.begin() + static_cast<std::ptrdiff_t>(N))};
    if (noiseless) {
        std::vector<double> y(N);
        for (std::size_t l = 0; l < N; ++l) y[l] = std::abs(c.sys.triples[l].kappa) * v.coeffs[l];
        return make_seq_observation(std::move(y), n, c.sys);
    }
    return simulate_whitenoise(v, c.sys, n, seed);
}

// ---------------------------------------------------------------------------
// Push-forward of coefficient draws

struct PushForward {
    Eigen::MatrixXd F;          ///< M x kept draws of f at the nodes
    std::vector<int> kept;      ///< indices of retained draws
    std::size_t excluded = 0;
    double delta0 = 0.0;        ///< floor used
    double min_denominator = 0.0;  ///< smallest Kv + g~ over all draws
    std::vector<double> plugin;    ///< e(posterior mean)

    double excluded_fraction() const {
        const double total = static_cast<double>(kept.size() + excluded);
        return total > 0 ? static_cast<double>(excluded) / total : 0.0;
    }
};

/// Maps draws C (N x D, h-coordinates) through e(v) = v / (c (Kv + g~)). A draw is
/// excluded when min(Kv + g~) falls below the floor; a zero floor is replaced by
/// min(K mean + g~) / 4.
inline PushForward push_forward(const SequenceCase& c, const Eigen::MatrixXd& C, const std::vector<double>& mean,
                                double delta0 = 0.0) {
    const auto N = C.rows();
    if (static_cast<std::size_t>(N) > c.rows() || mean.size() != static_cast<std::size_t>(N))
        throw DimensionError("push_forward: draws exceed the nodal matrices");
    const auto M = static_cast<Eigen::Index>(c.grid.size());
    Eigen::Map<const Eigen::VectorXd> gt(c.gtilde.data(), M);
    Eigen::Map<const Eigen::VectorXd> mu(mean.data(), N);
    const Eigen::VectorXd vmean = c.H.topRows(N).transpose() * mu;
    const Eigen::VectorXd umean = c.KH.topRows(N).transpose() * mu + gt;
    PushForward out;
    out.delta0 = delta0 > 0.0 ? delta0 : umean.minCoeff() / 4.0;
    out.plugin.resize(static_cast<std::size_t>(M));
    for (Eigen::Index j = 0; j < M; ++j)
        out.plugin[static_cast<std::size_t>(j)] = umean(j) > 0 ? vmean(j) / (c.divisor * umean(j)) : 0.0;
    const Eigen::MatrixXd V = c.H.topRows(N).transpose() * C;
    Eigen::MatrixXd U = c.KH.topRows(N).transpose() * C;
    U.colwise() += gt;
    out.min_denominator = U.minCoeff();
    for (Eigen::Index r = 0; r < C.cols(); ++r) {
        const double mn = U.col(r).minCoeff();
        if (out.delta0 > 0.0 ? mn >= out.delta0 : mn > 0.0)
            out.kept.push_back(static_cast<int>(r));
        else
            ++out.excluded;
    }
    out.F.resize(M, static_cast<Eigen::Index>(out.kept.size()));
    for (std::size_t k = 0; k < out.kept.size(); ++k) {
        const auto r = out.kept[k];
        out.F.col(static_cast<Eigen::Index>(k)) = V.col(r).array() / (c.divisor * U.col(r).array());
    }
    return out;
}

/// Linear-interpolation sample quantile (type 7) of a sorted range.
inline double sorted_quantile(const std::vector<double>& sorted, double q) {
    if (sorted.empty()) throw DomainError("quantile of an empty sample");
    const double h = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Trapezoid L2 norm of a nodal difference on a uniform tensor grid.
inline double grid_l2(const Grid& g, const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<std::vector<double>> w;
    for (int k = 0; k < g.dim(); ++k) w.push_back(detail::trapezoid_weights(g.nodes(k)));
    double s = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        double wi = 1.0;
        auto idx = g.unravel(i);
        for (int k = 0; k < g.dim(); ++k) wi *= w[static_cast<std::size_t>(k)][idx[static_cast<std::size_t>(k)]];
        s += wi * (a[i] - b[i]) * (a[i] - b[i]);
    }
    return std::sqrt(s);
}

struct BandSummary {
    double n = 0.0;
    double alpha = 0.0;  ///< EB estimate, HB posterior mean or the fixed value
    std::size_t truncation = 0;
    std::vector<double> truth, mean, lo, hi;
    double containment = 0.0;  ///< fraction of interior nodes with lo <= truth <= hi
    double excluded_fraction = 0.0;
    double delta0 = 0.0;
    double l2_error = 0.0;
    double sup_error = 0.0;
    std::vector<std::pair<double, double>> eb_trace;
    Eigen::MatrixXd sample_paths;  ///< first kept draws, M x k
};

inline BandSummary summarize_bands(const SequenceCase& c, const PushForward& pf, double level, int kept_draws) {
    if (pf.kept.empty())
        throw InversionDomainError("every posterior draw failed the denominator floor", pf.min_denominator);
    BandSummary b;
    const auto M = c.grid.size();
    b.truth = c.f0;
    b.mean.resize(M);
    b.lo.resize(M);
    b.hi.resize(M);
    const double q = (1.0 - level) / 2.0;
    std::vector<double> row(static_cast<std::size_t>(pf.F.cols()));
    std::size_t interior = 0, inside = 0;
    for (std::size_t j = 0; j < M; ++j) {
        const auto J = static_cast<Eigen::Index>(j);
        for (std::size_t r = 0; r < row.size(); ++r) row[r] = pf.F(J, static_cast<Eigen::Index>(r));
        b.mean[j] = std::accumulate(row.begin(), row.end(), 0.0) / static_cast<double>(row.size());
        std::sort(row.begin(), row.end());
        b.lo[j] = sorted_quantile(row, q);
        b.hi[j] = sorted_quantile(row, 1.0 - q);
        if (!c.grid.on_boundary(j, c.d)) {
            ++interior;
            if (b.lo[j] <= b.truth[j] && b.truth[j] <= b.hi[j]) ++inside;
        }
        b.sup_error = std::max(b.sup_error, std::abs(b.mean[j] - b.truth[j]));
    }
    b.containment = interior ? static_cast<double>(inside) / static_cast<double>(interior) : 1.0;
    b.excluded_fraction = pf.excluded_fraction();
    b.delta0 = pf.delta0;
    b.l2_error = grid_l2(c.grid, b.mean, b.truth);
    const auto k = std::min<Eigen::Index>(kept_draws, pf.F.cols());
    b.sample_paths = pf.F.leftCols(k);
    return b;
}

/// Posterior draws of the coefficients for one observation under the configured prior.
struct CoefficientPosterior {
    double alpha = 0.0;
    std::vector<double> mean;
    Eigen::MatrixXd draws;
    std::vector<std::pair<double, double>> eb_trace;
};

inline CoefficientPosterior infer_coefficients(const SeqObservation& obs, PriorMode mode, double alpha, int draws,
                                               std::uint64_t seed) {
    CoefficientPosterior out;
    switch (mode) {
        case PriorMode::fixed:
        case PriorMode::eb: {
            if (mode == PriorMode::eb) {
                auto eb = empirical_bayes_alpha(obs, 64);
                alpha = eb.alpha;
                out.eb_trace = std::move(eb.trace);
            }
            auto post = posterior(obs, PriorSpec{1.0, alpha, obs.d});
            out.alpha = alpha;
            out.mean = post.mean;
            out.draws = sample_posterior_matrix(post, draws, seed);
            break;
        }
        case PriorMode::hb: {
            auto hb = hierarchical_posterior(obs, default_hyper_density, default_hb_grid(obs.n));
            out.alpha = 0.0;
            for (std::size_t j = 0; j < hb.grid.size(); ++j) out.alpha += hb.weights[j] * hb.grid[j];
            out.mean = hb.mean();
            out.draws = hb.sample(draws, seed);
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Figure experiment

struct FigureResult {
    std::string name;
    int d = 1;
    Grid grid;
    std::vector<BandSummary> bands;
};

inline SequenceCase figure_case(const ExperimentConfig& cfg) {
    std::size_t rows = 0;
    const bool two_d = cfg.name == "schrodinger-2d";
    const std::size_t cap = cfg.max_truncation ? cfg.max_truncation : (two_d ? 2048 : 0);
    for (double n : cfg.n_list) {
        std::size_t N = default_truncation(n, two_d ? 2 : 1, 2.0);
        if (cap) N = std::min(N, cap);
        rows = std::max(rows, N);
    }
    if (two_d) return schrodinger_2d_case(cfg.m, rows);
    return schrodinger_1d_case(cfg.name, rows, cfg.intervals);
}

inline FigureResult run_figure_experiment(const ExperimentConfig& cfg, const SequenceCase& c) {
    cfg.validate();
    FigureResult res;
    res.name = c.name;
    res.d = c.d;
    res.grid = c.grid;
    const std::size_t cap = cfg.max_truncation ? cfg.max_truncation : (c.d == 2 ? 2048 : 0);
    for (std::size_t k = 0; k < cfg.n_list.size(); ++k) {
        const double n = cfg.n_list[k];
        const auto N = case_truncation(c, n, cap);
        auto obs = simulate_case(c, n, N, derive_seed(cfg.seed, 0, k));
        auto cp = infer_coefficients(obs, cfg.prior, cfg.alpha, cfg.draws, derive_seed(cfg.seed, 1, k));
        auto pf = push_forward(c, cp.draws, cp.mean, cfg.delta0);
        auto b = summarize_bands(c, pf, cfg.level, cfg.kept_draws);
        b.n = n;
        b.alpha = cp.alpha;
        b.truncation = N;
        b.eb_trace = std::move(cp.eb_trace);
        res.bands.push_back(std::move(b));
    }
    return res;
}

inline FigureResult run_figure_experiment(const ExperimentConfig& cfg) {
    return run_figure_experiment(cfg, figure_case(cfg));
}

// ---------------------------------------------------------------------------
// Contraction study

struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
};

inline LineFit least_squares_line(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw DimensionError("least_squares_line needs two or more points");
    const double k = static_cast<double>(x.size());
    const double mx = std::accumulate(x.begin(), x.end(), 0.0) / k;
    const double my = std::accumulate(y.begin(), y.end(), 0.0) / k;
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) sxy += (x[i] - mx) * (y[i] - my), sxx += (x[i] - mx) * (x[i] - mx);
    if (sxx == 0.0) throw DomainError("least_squares_line: x values are all equal");
    return {sxy / sxx, my - sxy / sxx * mx};
}

struct SlopeReport {
    double alpha = 0.0;
    std::vector<double> n;
    std::vector<std::vector<double>> errors;  ///< per n, per replication
    std::vector<double> mean_error;
    double slope = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;
};

struct ContractionReport {
    double beta = 1.0;
    double p = 1.0;
    double theoretical = 0.0;
    SlopeReport well;
    SlopeReport misspecified;
    double noiseless_n = 0.0;
    double noiseless_error = 0.0;
    std::size_t noiseless_truncation = 0;
};

/// L2 error of the draw-averaged posterior mean of f for one replication.
inline double replication_error(const SequenceCase& c, double n, double alpha, int draws, std::uint64_t seed,
                                bool noiseless = false) {
    const auto N = case_truncation(c, n);
    auto obs = simulate_case(c, n, N, derive_seed(seed, 0, 0), noiseless);
    auto post = posterior(obs, PriorSpec{1.0, alpha, 1});
    auto pf = push_forward(c, sample_posterior_matrix(post, draws, derive_seed(seed, 1, 0)), post.mean);
    if (pf.kept.empty()) throw InversionDomainError("every posterior draw failed the denominator floor", pf.min_denominator);
    std::vector<double> mean(c.grid.size());
    for (std::size_t j = 0; j < mean.size(); ++j) mean[j] = pf.F.row(static_cast<Eigen::Index>(j)).mean();
    return grid_l2(c.grid, mean, c.f0);
}

inline SlopeReport slope_study(const SequenceCase& c, const ExperimentConfig& cfg, double alpha, std::uint64_t stream) {
    SlopeReport r;
    r.alpha = alpha;
    r.n = cfg.n_list;
    const auto R = static_cast<std::size_t>(cfg.reps);
    r.errors.assign(r.n.size(), std::vector<double>(R));
    parallel_for(r.n.size() * R, [&](std::size_t t) {
        const std::size_t k = t / R, rep = t % R;
        r.errors[k][rep] = replication_error(c, r.n[k], alpha, cfg.draws, derive_seed(cfg.seed + rep, stream, k));
    });
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < r.n.size(); ++k) {
        const auto& e = r.errors[k];
        r.mean_error.push_back(std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size()));
        lx.push_back(std::log(r.n[k]));
        ly.push_back(std::log(r.mean_error.back()));
    }
    r.slope = r.n.size() >= 2 ? least_squares_line(lx, ly).slope : 0.0;
    if (r.n.size() >= 2 && cfg.bootstrap > 0) {
        std::mt19937_64 rng(derive_seed(cfg.seed, stream + 100, 0));
        std::uniform_int_distribution<std::size_t> pick(0, R - 1);
        std::vector<double> slopes(static_cast<std::size_t>(cfg.bootstrap));
        for (auto& s : slopes) {
            std::vector<double> by;
            for (const auto& e : r.errors) {
                double acc = 0.0;
                for (std::size_t i = 0; i < R; ++i) acc += e[pick(rng)];
                by.push_back(std::log(acc / static_cast<double>(R)));
            }
            s = least_squares_line(lx, by).slope;
        }
        std::sort(slopes.begin(), slopes.end());
        r.ci_lo = sorted_quantile(slopes, 0.025);
        r.ci_hi = sorted_quantile(slopes, 0.975);
    }
    return r;
}

inline std::size_t volterra_rows(const ExperimentConfig& cfg) {
    std::size_t rows = 0;
    for (double n : cfg.n_list) rows = std::max(rows, default_truncation(n, 1, 1.0));
    return rows;
}

inline ContractionReport contraction_study(const ExperimentConfig& cfg, const SequenceCase& c) {
    cfg.validate();
    ContractionReport rep;
    rep.beta = cfg.beta;
    rep.p = c.sys.p;
    rep.theoretical = -std::min(cfg.alpha, cfg.beta) / (1.0 + 2.0 * cfg.alpha + 2.0 * rep.p);
    rep.well = slope_study(c, cfg, cfg.alpha, 10);
    rep.misspecified = slope_study(c, cfg, cfg.misspecified_alpha, 20);
    if (cfg.noiseless_n > 0.0) {
        rep.noiseless_n = cfg.noiseless_n;
        rep.noiseless_truncation = case_truncation(c, cfg.noiseless_n);
        rep.noiseless_error = replication_error(c, cfg.noiseless_n, cfg.alpha, cfg.draws, derive_seed(cfg.seed, 30, 0), true);
    }
    return rep;
}

inline ContractionReport contraction_study(const ExperimentConfig& cfg) {
    auto rows = volterra_rows(cfg);
    if (cfg.noiseless_n > 0.0) rows = std::max(rows, default_truncation(cfg.noiseless_n, 1, 1.0));
    rows = std::min<std::size_t>(rows, static_cast<std::size_t>(cfg.truth_terms));
    return contraction_study(cfg, volterra_case(cfg.beta, cfg.truth_terms, rows, cfg.intervals));
}

// ---------------------------------------------------------------------------
// Coverage study

struct CoverageRow {
    double alpha = 0.0;
    double inflation = 1.0;
    double n = 0.0;
    double coverage = 0.0;
    double mean_radius = 0.0;
    double mean_distance = 0.0;
    int reps = 0;
};

struct CoverageReport {
    double beta = 1.0;
    double level = 0.95;
    std::vector<CoverageRow> rows;

    const CoverageRow* find(double alpha, double inflation, double n) const {
        for (const auto& r : rows)
            if (r.alpha == alpha && r.inflation == inflation && r.n == n) return &r;
        return nullptr;
    }
};

/// Fraction of replications with ||v0 - center|| <= c r_n, where r_n is the
/// posterior `level` radius and the distance includes the truth beyond the truncation.
inline CoverageReport coverage_study(const ExperimentConfig& cfg, const SequenceCase& c) {
    cfg.validate();
    CoverageReport out;
    out.beta = cfg.beta;
    out.level = cfg.level;
    const auto R = static_cast<std::size_t>(cfg.reps);
    for (std::size_t a = 0; a < cfg.alphas.size(); ++a) {
        const double alpha = cfg.alphas[a];
        for (std::size_t k = 0; k < cfg.n_list.size(); ++k) {
            const double n = cfg.n_list[k];
            std::vector<double> radius(R), dist(R);
            parallel_for(R, [&](std::size_t rep) {
                const auto N = case_truncation(c, n);
                const auto seed = derive_seed(cfg.seed + rep, 40 + a, k);
                auto obs = simulate_case(c, n, N, derive_seed(seed, 0, 0));
                auto post = posterior(obs, PriorSpec{1.0, alpha, c.d});
                radius[rep] = credible_radius(post, cfg.level, cfg.radius_draws, derive_seed(seed, 1, 0));
                double s = c.tail_sq(N);
                for (std::size_t l = 0; l < N; ++l) s += (c.v0[l] - post.mean[l]) * (c.v0[l] - post.mean[l]);
                dist[rep] = std::sqrt(s);
            });
            for (double infl : cfg.inflations) {
                CoverageRow row{alpha, infl, n, 0.0, 0.0, 0.0, cfg.reps};
                std::size_t hit = 0;
                for (std::size_t rep = 0; rep < R; ++rep) {
                    if (dist[rep] <= infl * radius[rep]) ++hit;
                    row.mean_radius += radius[rep] / static_cast<double>(R);
                    row.mean_distance += dist[rep] / static_cast<double>(R);
                }
                row.coverage = static_cast<double>(hit) / static_cast<double>(R);
                out.rows.push_back(row);
            }
        }
    }
    return out;
}

inline CoverageReport coverage_study(const ExperimentConfig& cfg) {
    return coverage_study(cfg, volterra_case(cfg.beta, cfg.truth_terms, volterra_rows(cfg), 64));
}

// ---------------------------------------------------------------------------
// Darcy refinement study

struct RefinementReport {
    std::vector<double> delta;
    std::vector<double> error;
    std::vector<double> decrement;  ///< log2 error ratio per halving
    std::vector<double> C;
    std::vector<std::size_t> cycles;
};

/// Characteristics inversion of the manufactured pair
/// u* = ((x + 1/2)^2 + (y + 1/2)^2) / 2, f* = 1 + 0.3 sin(2x) cos(y), with f*
/// prescribed as influx on the inflow edges.
inline RefinementReport darcy_refinement_study(const std::vector<double>& deltas) {
    auto fs = [](double x, double y) { return 1 + 0.3 * std::sin(2 * x) * std::cos(y); };
    auto rhs = [fs](double x, double y) {
        const double fx = 0.6 * std::cos(2 * x) * std::cos(y), fy = -0.3 * std::sin(2 * x) * std::sin(y);
        return fx * (x + 0.5) + fy * (y + 0.5) + 2 * fs(x, y);
    };
    RefinementReport rep;
    for (double d : deltas) {
        auto dg = darcy_grid_from_functions(
            d, [](double x, double y) { return 0.5 * ((x + 0.5) * (x + 0.5) + (y + 0.5) * (y + 0.5)); },
            [](double x, double y) { return std::pair{x + 0.5, y + 0.5}; }, [](double, double) { return 2.0; }, rhs, fs);
        auto r = darcy_characteristics(dg);
        double e = 0.0;
        for (std::size_t k = 0; k < r.alpha.size(); ++k) {
            const auto p = r.alpha.grid.point(k);
            e = std::max(e, std::abs(r.alpha[k] - fs(p[0], p[1])));
        }
        rep.delta.push_back(d);
        rep.error.push_back(e);
        rep.C.push_back(r.C);
        rep.cycles.push_back(r.cycles_resolved);
        if (rep.error.size() > 1) rep.decrement.push_back(std::log2(rep.error[rep.error.size() - 2] / e));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Acceptance assertions per study

struct StudyCheck {
    std::string name;
    bool passed = false;
    std::string detail;
};

inline std::vector<StudyCheck> figure_checks(const FigureResult& r) {
    std::vector<StudyCheck> out;
    for (const auto& b : r.bands) {
        if (b.n >= 1e6)
            out.push_back({"excluded draws <= 1% at n = " + io::format_double(b.n), b.excluded_fraction <= 0.01,
                           "excluded fraction " + io::format_double(b.excluded_fraction)});
        if (r.name == "schrodinger-1d-smooth" && b.n == 1e8)
            out.push_back({"band contains f0 at >= 95% of interior nodes at n = 1e8", b.containment >= 0.95,
                           "containment " + io::format_double(b.containment)});
    }
    return out;
}

inline std::vector<StudyCheck> contraction_checks(const ContractionReport& r) {
    std::vector<StudyCheck> out;
    out.push_back({"slope within [-0.35, -0.15]", r.well.slope >= -0.35 && r.well.slope <= -0.15,
                   "slope " + io::format_double(r.well.slope) + ", theoretical " + io::format_double(r.theoretical)});
    out.push_back({"misspecified slope magnitude <= well-specified + 0.05",
                   std::abs(r.misspecified.slope) <= std::abs(r.well.slope) + 0.05,
                   "alpha " + io::format_double(r.misspecified.alpha) + " slope " + io::format_double(r.misspecified.slope)});
    return out;
}

inline std::vector<StudyCheck> coverage_checks(const CoverageReport& r) {
    std::vector<StudyCheck> out;
    for (const auto& row : r.rows)
        if (row.alpha < r.beta && row.inflation == 1.0)
            out.push_back({"coverage >= 0.90 for alpha = " + io::format_double(row.alpha) + " < beta at n = " +
                               io::format_double(row.n),
                           row.coverage >= 0.90, "coverage " + io::format_double(row.coverage)});
    return out;
}

inline std::vector<StudyCheck> refinement_checks(const RefinementReport& r) {
    std::vector<StudyCheck> out;
    bool monotone = true, band = true;
    for (std::size_t k = 1; k < r.error.size(); ++k) monotone = monotone && r.error[k] < r.error[k - 1];
    for (double dec : r.decrement) band = band && dec >= 0.25 && dec <= 1.5;
    std::string decs;
    for (double dec : r.decrement) decs += (decs.empty() ? "" : ", ") + io::format_double(dec);
    out.push_back({"max error decreases monotonically", monotone, ""});
    out.push_back({"log2 decrement per halving within [0.25, 1.5]", band, "decrements " + decs});
    return out;
}

// ---------------------------------------------------------------------------
// Output writers

namespace svg {

struct Series {
    std::string label;
    std::vector<double> x, y;
    std::string color = "#000000";
    bool dashed = false;
    double width = 1.5;
};

/// Line plot with linear or log axes; no text beyond the title and legend.
inline std::string line_plot(const std::string& title, const std::vector<Series>& series, bool logx = false,
                             bool logy = false, int width = 640, int height = 360) {
    auto tx = [&](double v) { return logx ? std::log10(v) : v; };
    auto ty = [&](double v) { return logy ? std::log10(v) : v; };
    double x0 = 1e300, x1 = -1e300, y0 = 1e300, y1 = -1e300;
    for (const auto& s : series)
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(tx(s.x[i])) || !std::isfinite(ty(s.y[i]))) continue;
            x0 = std::min(x0, tx(s.x[i])), x1 = std::max(x1, tx(s.x[i]));
            y0 = std::min(y0, ty(s.y[i])), y1 = std::max(y1, ty(s.y[i]));
        }
    if (!(x1 > x0)) x1 = x0 + 1;
    if (!(y1 > y0)) y1 = y0 + 1;
    const double pad = 40;
    auto px = [&](double v) { return pad + (tx(v) - x0) / (x1 - x0) * (width - 2 * pad); };
    auto py = [&](double v) { return height - pad - (ty(v) - y0) / (y1 - y0) * (height - 2 * pad); };
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << pad << "\" y=\"20\" font-size=\"13\" font-family=\"sans-serif\">" << title << "</text>\n";
    o << "<rect x=\"" << pad << "\" y=\"" << pad << "\" width=\"" << width - 2 * pad << "\" height=\"" << height - 2 * pad
      << "\" fill=\"none\" stroke=\"#888\"/>\n";
    int legend = 0;
    for (const auto& s : series) {
        o << "<polyline fill=\"none\" stroke=\"" << s.color << "\" stroke-width=\"" << s.width << "\"";
        if (s.dashed) o << " stroke-dasharray=\"4,3\"";
        o << " points=\"";
        for (std::size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(tx(s.x[i])) || !std::isfinite(ty(s.y[i]))) continue;
            o << io::format_double(std::round(px(s.x[i]) * 100) / 100) << ','
              << io::format_double(std::round(py(s.y[i]) * 100) / 100) << ' ';
        }
        o << "\"/>\n";
        if (!s.label.empty()) {
            const double ly = pad + 14 + 14 * legend++;
            o << "<text x=\"" << width - pad - 150 << "\" y=\"" << ly << "\" font-size=\"11\" font-family=\"sans-serif\" fill=\""
              << s.color << "\">" << s.label << "</text>\n";
        }
    }
    o << "</svg>\n";
    return o.str();
}

/// Grey-scale heat map of a row-major nx x ny field.
inline std::string heat_map(const std::string& title, const std::vector<double>& v, std::size_t nx, std::size_t ny,
                            int cell = 6) {
    const auto [mn, mx] = std::minmax_element(v.begin(), v.end());
    const double lo = *mn, span = *mx > *mn ? *mx - *mn : 1.0;
    std::ostringstream o;
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << nx * cell << "\" height=\"" << ny * cell + 24 << "\">\n";
    o << "<text x=\"4\" y=\"16\" font-size=\"13\" font-family=\"sans-serif\">" << title << "</text>\n";
    for (std::size_t i = 0; i < nx; ++i)
        for (std::size_t j = 0; j < ny; ++j) {
            const int g = static_cast<int>(std::lround(255.0 * (v[i * ny + j] - lo) / span));
            o << "<rect x=\"" << i * cell << "\" y=\"" << 24 + (ny - 1 - j) * cell << "\" width=\"" << cell << "\" height=\""
              << cell << "\" fill=\"rgb(" << g << ',' << g << ',' << g << ")\"/>\n";
        }
    o << "</svg>\n";
    return o.str();
}

}  // namespace svg

inline void write_figure_outputs(const FigureResult& r, const std::filesystem::path& dir) {
    const bool two_d = r.d == 2;
    std::vector<std::string> head{"n"};
    if (two_d)
        head.insert(head.end(), {"x1", "x2"});
    else
        head.push_back("x");
    auto bands_head = head;
    bands_head.insert(bands_head.end(), {"truth", "mean", "lo", "hi"});
    io::CsvWriter bands(bands_head);
    auto draws_head = head;
    draws_head.insert(draws_head.begin() + 1, "draw");
    draws_head.push_back("f");
    io::CsvWriter draws(draws_head);
    nlohmann::ordered_json summary;
    summary["experiment"] = r.name;
    summary["d"] = r.d;
    for (const auto& b : r.bands) {
        for (std::size_t j = 0; j < r.grid.size(); ++j) {
            std::vector<double> row{b.n};
            for (double x : r.grid.point(j)) row.push_back(x);
            row.insert(row.end(), {b.truth[j], b.mean[j], b.lo[j], b.hi[j]});
            bands.row(row);
        }
        for (Eigen::Index k = 0; k < b.sample_paths.cols(); ++k)
            for (std::size_t j = 0; j < r.grid.size(); ++j) {
                std::vector<double> row{b.n, static_cast<double>(k)};
                for (double x : r.grid.point(j)) row.push_back(x);
                row.push_back(b.sample_paths(static_cast<Eigen::Index>(j), k));
                draws.row(row);
            }
        summary["runs"].push_back({{"n", b.n},
                                   {"alpha", b.alpha},
                                   {"truncation", b.truncation},
                                   {"containment", b.containment},
                                   {"excluded_fraction", b.excluded_fraction},
                                   {"delta0", b.delta0},
                                   {"l2_error", b.l2_error},
                                   {"sup_error", b.sup_error}});
    }
    std::filesystem::create_directories(dir);
    bands.save(dir / "bands.csv");
    draws.save(dir / "draws.csv");
    auto checks = figure_checks(r);
    for (const auto& c : checks) summary["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    io::write_atomic(dir / "summary.json", summary.dump(2) + "\n");

    std::string plot;
    if (two_d) {
        const auto& b = r.bands.back();
        plot = svg::heat_map(r.name + " posterior mean, n = " + io::format_double(b.n), b.mean, r.grid.nodes(0),
                             r.grid.nodes(1));
    } else {
        std::ostringstream all;
        for (const auto& b : r.bands) {
            const auto& x = r.grid.axes[0];
            std::vector<svg::Series> s{{"truth", x, b.truth, "#000000"},
                                       {"mean", x, b.mean, "#cc0000"},
                                       {"2.5%", x, b.lo, "#008800", true},
                                       {"97.5%", x, b.hi, "#008800", true}};
            all << svg::line_plot(r.name + ", n = " + io::format_double(b.n), s);
        }
        // Stack the panels into one document.
        std::string panels = all.str();
        std::ostringstream doc;
        const auto count = r.bands.size();
        doc << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"" << 360 * count << "\">\n";
        std::size_t pos = 0, k = 0;
        while ((pos = panels.find("<svg", pos)) != std::string::npos) {
            const auto end = panels.find("</svg>", pos) + 6;
            doc << "<g transform=\"translate(0," << 360 * k++ << ")\">" << panels.substr(pos, end - pos) << "</g>\n";
            pos = end;
        }
        doc << "</svg>\n";
        plot = doc.str();
    }
    io::write_atomic(dir / "plot.svg", plot);
}

inline nlohmann::ordered_json slope_json(const SlopeReport& s) {
    return {{"alpha", s.alpha}, {"n", s.n}, {"mean_error", s.mean_error}, {"slope", s.slope}, {"ci", {s.ci_lo, s.ci_hi}}};
}

inline void write_contraction_outputs(const ContractionReport& r, const std::filesystem::path& dir) {
    io::CsvWriter errors({"alpha", "n", "rep", "error"});
    for (const auto* s : {&r.well, &r.misspecified})
        for (std::size_t k = 0; k < s->n.size(); ++k)
            for (std::size_t rep = 0; rep < s->errors[k].size(); ++rep)
                errors.row(s->alpha, s->n[k], static_cast<double>(rep), s->errors[k][rep]);
    nlohmann::ordered_json summary{{"study", "contraction"},
                                   {"family", "volterra"},
                                   {"beta", r.beta},
                                   {"p", r.p},
                                   {"theoretical_slope", r.theoretical},
                                   {"well_specified", slope_json(r.well)},
                                   {"misspecified", slope_json(r.misspecified)},
                                   {"noiseless", {{"n", r.noiseless_n}, {"truncation", r.noiseless_truncation},
                                                  {"error", r.noiseless_error}}}};
    for (const auto& c : contraction_checks(r))
        summary["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    std::filesystem::create_directories(dir);
    errors.save(dir / "errors.csv");
    io::write_atomic(dir / "summary.json", summary.dump(2) + "\n");
    std::vector<svg::Series> s{{"alpha = " + io::format_double(r.well.alpha), r.well.n, r.well.mean_error, "#cc0000"},
                               {"alpha = " + io::format_double(r.misspecified.alpha), r.misspecified.n,
                                r.misspecified.mean_error, "#0000cc"}};
    io::write_atomic(dir / "plot.svg", svg::line_plot("mean L2 error of f vs n", s, true, true));
}

inline void write_coverage_outputs(const CoverageReport& r, const std::filesystem::path& dir) {
    io::CsvWriter table({"alpha", "inflation", "n", "coverage", "mean_radius", "mean_distance", "reps"});
    nlohmann::ordered_json summary{{"study", "coverage"}, {"family", "volterra"}, {"beta", r.beta}, {"level", r.level}};
    for (const auto& row : r.rows) {
        table.row(row.alpha, row.inflation, row.n, row.coverage, row.mean_radius, row.mean_distance,
                  static_cast<double>(row.reps));
        summary["rows"].push_back({{"alpha", row.alpha},
                                   {"inflation", row.inflation},
                                   {"n", row.n},
                                   {"coverage", row.coverage},
                                   {"mean_radius", row.mean_radius},
                                   {"mean_distance", row.mean_distance}});
    }
    for (const auto& c : coverage_checks(r))
        summary["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    std::filesystem::create_directories(dir);
    table.save(dir / "coverage.csv");
    io::write_atomic(dir / "summary.json", summary.dump(2) + "\n");
    std::vector<svg::Series> s;
    const char* colors[] = {"#cc0000", "#0000cc", "#008800", "#aa6600"};
    std::size_t k = 0;
    for (const auto& row : r.rows) {
        s.push_back({"alpha " + io::format_double(row.alpha) + ", c " + io::format_double(row.inflation),
                     {static_cast<double>(k), static_cast<double>(k) + 0.6}, {row.coverage, row.coverage}, colors[k % 4],
                     false, 6.0});
        ++k;
    }
    io::write_atomic(dir / "plot.svg", svg::line_plot("coverage of the L2 credible ball", s));
}

inline void write_refinement_outputs(const RefinementReport& r, const std::filesystem::path& dir) {
    io::CsvWriter table({"delta", "max_error", "C", "cycles_resolved"});
    for (std::size_t k = 0; k < r.delta.size(); ++k)
        table.row(r.delta[k], r.error[k], r.C[k], static_cast<double>(r.cycles[k]));
    nlohmann::ordered_json summary{{"study", "darcy-refinement"}, {"delta", r.delta}, {"max_error", r.error},
                                   {"decrement", r.decrement}, {"C", r.C}};
    for (const auto& c : refinement_checks(r))
        summary["checks"].push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    std::filesystem::create_directories(dir);
    table.save(dir / "refinement.csv");
    io::write_atomic(dir / "summary.json", summary.dump(2) + "\n");
    io::write_atomic(dir / "plot.svg", svg::line_plot("max error vs delta", {{"error", r.delta, r.error, "#cc0000"}}, true, true));
}

/// Runs a study, writes its outputs and returns the acceptance checks.
inline std::vector<StudyCheck> run_study(const ExperimentConfig& cfg) {
    cfg.validate();
    if (cfg.study == "figure") {
        auto r = run_figure_experiment(cfg);
        if (!cfg.output.empty()) write_figure_outputs(r, cfg.output);
        return figure_checks(r);
    }
    if (cfg.study == "contraction") {
        auto r = contraction_study(cfg);
        if (!cfg.output.empty()) write_contraction_outputs(r, cfg.output);
        return contraction_checks(r);
    }
    if (cfg.study == "coverage") {
        auto r = coverage_study(cfg);
        if (!cfg.output.empty()) write_coverage_outputs(r, cfg.output);
        return coverage_checks(r);
    }
    auto r = darcy_refinement_study(cfg.deltas);
    if (!cfg.output.empty()) write_refinement_outputs(r, cfg.output);
    return refinement_checks(r);
}

}  // namespace pdelin
