#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "bases.hpp"
#include "errors.hpp"
#include "seqspace.hpp"

namespace pdelin {

/// Gaussian prior with variances lambda_l = tau^2 l^{-1-2 alpha/d}.
struct PriorSpec {
    double tau = 1.0;
    double alpha = 1.0;
    int d = 1;

    double variance(std::size_t ell) const {
        return tau * tau * std::pow(static_cast<double>(ell), -1.0 - 2.0 * alpha / d);
    }

    void validate() const {
        if (!(tau > 0.0)) throw DomainError("prior tau must be positive");
        if (!(alpha >= 0.0)) throw DomainError("prior alpha must be >= 0");
        if (d < 1) throw DimensionError("prior dimension must be >= 1");
    }
};

/// Observations Y_l = kappa_l v_l + Z_l / sqrt(n), l = 1..N.
///
/// `kappa` holds the magnitudes used by inference. `sign` and `scale` record how
/// to map inferred coefficients back to the generating basis: the coefficient
/// of h_l is v_l / scale.
struct SeqObservation {
    std::vector<double> y;
    double n = 1.0;
    std::vector<double> kappa;
    std::vector<int> sign;
    int d = 1;
    double p = 1.0;
    double scale = 1.0;
    std::string basis_id;

    std::size_t size() const noexcept { return y.size(); }

    void validate() const {
        if (!(n > 0.0)) throw DomainError("observation n must be positive");
        if (y.size() != kappa.size()) throw DimensionError("observation y and kappa lengths differ");
        if (y.empty()) throw DimensionError("observation is empty");
    }
};

/// Attaches the first y.size() singular values of `sys` to the data.
inline SeqObservation make_seq_observation(std::vector<double> y, double n, const SvdSystem& sys) {
    if (y.size() > sys.size()) throw DimensionError("observation longer than the basis truncation");
    SeqObservation obs;
    obs.n = n;
    obs.d = sys.d;
    obs.p = sys.p;
    obs.basis_id = sys.id;
    for (std::size_t l = 0; l < y.size(); ++l) {
        obs.kappa.push_back(std::abs(sys.triples[l].kappa));
        obs.sign.push_back(sys.triples[l].sign);
    }
    obs.y = std::move(y);
    obs.validate();
    return obs;
}

struct PosteriorGaussian {
    std::vector<double> mean;
    std::vector<double> var;
    PriorSpec prior;
    double n = 1.0;

    std::size_t size() const noexcept { return mean.size(); }
};

inline PosteriorGaussian posterior(const SeqObservation& obs, const PriorSpec& prior) {
    obs.validate();
    prior.validate();
    PosteriorGaussian post;
    post.prior = prior;
    post.n = obs.n;
    const auto N = obs.size();
    post.mean.resize(N);
    post.var.resize(N);
    for (std::size_t l = 0; l < N; ++l) {
        const double lam = prior.variance(l + 1);
        const double k = obs.kappa[l];
        const double denom = 1.0 + obs.n * lam * k * k;
        post.mean[l] = obs.n * lam * k * obs.y[l] / denom;
        post.var[l] = lam / denom;
    }
    return post;
}

/// N x count matrix of posterior draws; column r is draw r.
inline Eigen::MatrixXd sample_posterior_matrix(const PosteriorGaussian& post, int count, std::uint64_t seed) {
    if (count < 1) throw DomainError("sample count must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    const auto N = static_cast<Eigen::Index>(post.size());
    Eigen::MatrixXd out(N, count);
    for (int r = 0; r < count; ++r)
        for (Eigen::Index l = 0; l < N; ++l) {
            const auto u = static_cast<std::size_t>(l);
            out(l, r) = post.mean[u] + std::sqrt(post.var[u]) * z(rng);
        }
    return out;
}

inline std::vector<CoeffSeq> sample_posterior(const PosteriorGaussian& post, int count, std::uint64_t seed,
                                              const std::string& basis_id = {}) {
    auto m = sample_posterior_matrix(post, count, seed);
    std::vector<CoeffSeq> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int r = 0; r < count; ++r) {
        CoeffSeq c{basis_id, post.prior.d, std::vector<double>(post.size())};
        for (std::size_t l = 0; l < post.size(); ++l) c.coeffs[l] = m(static_cast<Eigen::Index>(l), r);
        out.push_back(std::move(c));
    }
    return out;
}

/// Negative log marginal likelihood in alpha (tau = 1), up to an alpha-free
/// constant and a factor 2.
inline double eb_objective(double alpha, const SeqObservation& obs) {
    if (!(alpha >= 0.0)) throw DomainError("eb_objective: alpha must be >= 0");
    obs.validate();
    double total = 0.0;
    for (std::size_t l = 0; l < obs.size(); ++l) {
        const double k = obs.kappa[l];
        const double L = std::pow(static_cast<double>(l + 1), 1.0 + 2.0 * alpha / obs.d) / (k * k);
        const double y = obs.y[l];
        total += std::log1p(obs.n / L) - obs.n * obs.n * y * y / (L + obs.n);
    }
    return total;
}

struct EbResult {
    double alpha = 0.0;
    double objective = 0.0;
    std::vector<std::pair<double, double>> trace;  ///< (alpha, objective), grid scan first
};

/// argmin of eb_objective over [0, log n]: uniform scan, then golden section
/// inside the bracket around the best scan point. Ties go to the smaller alpha.
inline EbResult empirical_bayes_alpha(const SeqObservation& obs, int grid_points = 64) {
    if (grid_points < 8) throw DomainError("empirical_bayes_alpha needs at least 8 grid points");
    const double hi = std::log(obs.n);
    if (!(hi > 0.0)) throw DomainError("empirical_bayes_alpha needs n > 1");
    EbResult res;
    std::vector<double> grid(static_cast<std::size_t>(grid_points));
    std::size_t best = 0;
    for (int j = 0; j < grid_points; ++j) {
        const double a = hi * j / (grid_points - 1);
        const double f = eb_objective(a, obs);
        grid[static_cast<std::size_t>(j)] = a;
        res.trace.emplace_back(a, f);
        if (f < res.trace[best].second) best = static_cast<std::size_t>(j);
    }
    res.alpha = res.trace[best].first;
    res.objective = res.trace[best].second;

    double a = grid[best == 0 ? 0 : best - 1];
    double b = grid[std::min(best + 1, grid.size() - 1)];
    const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - invphi * (b - a);
    double e = a + invphi * (b - a);
    double fc = eb_objective(c, obs);
    double fe = eb_objective(e, obs);
    res.trace.emplace_back(c, fc);
    res.trace.emplace_back(e, fe);
    for (int it = 0; it < 80 && b - a > 1e-10 * (1.0 + std::abs(a)); ++it) {
        if (fc <= fe) {
            b = e, e = c, fe = fc;
            c = b - invphi * (b - a);
            fc = eb_objective(c, obs);
            res.trace.emplace_back(c, fc);
        } else {
            a = c, c = e, fc = fe;
            e = a + invphi * (b - a);
            fe = eb_objective(e, obs);
            res.trace.emplace_back(e, fe);
        }
    }
    for (auto [alpha, f] : {std::pair{c, fc}, std::pair{e, fe}})
        if (f < res.objective) res.alpha = alpha, res.objective = f;
    return res;
}

/// Default hyperprior density exp(-alpha).
inline double default_hyper_density(double alpha) { return std::exp(-alpha); }

/// 128-point (default) uniform grid on [0, log n].
inline std::vector<double> default_hb_grid(double n, int points = 128) {
    std::vector<double> g(static_cast<std::size_t>(points));
    for (int j = 0; j < points; ++j) g[static_cast<std::size_t>(j)] = std::log(n) * j / (points - 1);
    return g;
}

/// Posterior weights of alpha on a grid: hyper(alpha) * exp(-objective / 2), normalized
/// through log-sum-exp.
inline std::vector<double> hb_alpha_posterior(const SeqObservation& obs, const std::function<double(double)>& hyper,
                                              const std::vector<double>& grid) {
    if (grid.empty()) throw DomainError("hb_alpha_posterior: empty grid");
    for (std::size_t j = 0; j < grid.size(); ++j) {
        if (!(grid[j] >= 0.0)) throw DomainError("hb_alpha_posterior: grid must be nonnegative");
        if (j && !(grid[j] > grid[j - 1])) throw DomainError("hb_alpha_posterior: grid must be strictly increasing");
    }
    std::vector<double> logw(grid.size());
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double h = hyper(grid[j]);
        if (!(h > 0.0)) throw DomainError("hb_alpha_posterior: hyper density must be positive on the grid");
        logw[j] = std::log(h) - 0.5 * eb_objective(grid[j], obs);
        mx = std::max(mx, logw[j]);
    }
    if (!std::isfinite(mx)) throw NumericalError("hb_alpha_posterior: all log weights are non-finite");
    double total = 0.0;
    for (auto& w : logw) total += (w = std::exp(w - mx));
    for (auto& w : logw) w /= total;
    return logw;
}

/// Mixture of Gaussian posteriors over an alpha grid.
struct HbPosterior {
    std::vector<double> grid;
    std::vector<double> weights;
    std::vector<PosteriorGaussian> components;

    std::vector<double> mean() const {
        std::vector<double> m(components.front().size(), 0.0);
        for (std::size_t j = 0; j < components.size(); ++j)
            for (std::size_t l = 0; l < m.size(); ++l) m[l] += weights[j] * components[j].mean[l];
        return m;
    }

    /// Draws alpha from the weights, then v from the matching component.
    Eigen::MatrixXd sample(int count, std::uint64_t seed) const {
        std::mt19937_64 rng(seed);
        std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
        std::normal_distribution<double> z;
        const auto N = static_cast<Eigen::Index>(components.front().size());
        Eigen::MatrixXd out(N, count);
        for (int r = 0; r < count; ++r) {
            const auto& c = components[pick(rng)];
            for (Eigen::Index l = 0; l < N; ++l) {
                const auto u = static_cast<std::size_t>(l);
                out(l, r) = c.mean[u] + std::sqrt(c.var[u]) * z(rng);
            }
        }
        return out;
    }
};

inline HbPosterior hierarchical_posterior(const SeqObservation& obs, const std::function<double(double)>& hyper,
                                          const std::vector<double>& grid) {
    HbPosterior hb;
    hb.grid = grid;
    hb.weights = hb_alpha_posterior(obs, hyper, grid);
    for (double a : grid) hb.components.push_back(posterior(obs, PriorSpec{1.0, a, obs.d}));
    return hb;
}

/// Empirical `level` quantile of sqrt(sum_l var_l Z_l^2) over mc_draws samples.
inline double credible_radius(const PosteriorGaussian& post, double level, int mc_draws = 2000, std::uint64_t seed = 0) {
    if (!(level > 0.0 && level < 1.0)) throw DomainError("credible_radius: level must be in (0,1)");
    if (mc_draws < 1) throw DomainError("credible_radius: mc_draws must be >= 1");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z;
    std::vector<double> r(static_cast<std::size_t>(mc_draws));
    for (auto& x : r) {
        double s = 0.0;
        for (double v : post.var) {
            const double g = z(rng);
            s += v * g * g;
        }
        x = std::sqrt(s);
    }
    std::sort(r.begin(), r.end());
    auto idx = static_cast<std::size_t>(std::ceil(level * mc_draws));
    idx = std::clamp<std::size_t>(idx, 1, r.size()) - 1;
    return r[idx];
}

/// L2 ball around the posterior mean; `radius` is the uninflated posterior quantile.
struct CredibleBall {
    std::vector<double> center;
    double radius = 0.0;
    double level = 0.95;
    double inflation = 1.0;

    double effective_radius() const noexcept { return inflation * radius; }

    double distance(const std::vector<double>& v) const {
        if (v.size() != center.size()) throw DimensionError("CredibleBall: length mismatch");
        double s = 0.0;
        for (std::size_t l = 0; l < v.size(); ++l) s += (v[l] - center[l]) * (v[l] - center[l]);
        return std::sqrt(s);
    }

    bool contains(const std::vector<double>& v) const { return distance(v) <= effective_radius(); }
};

inline CredibleBall credible_ball(const PosteriorGaussian& post, double level, double inflation = 1.0,
                                  int mc_draws = 2000, std::uint64_t seed = 0) {
    if (!(inflation >= 1.0)) throw DomainError("credible_ball: inflation must be >= 1");
    return CredibleBall{post.mean, credible_radius(post, level, mc_draws, seed), level, inflation};
}

/// Diagnostic h_n(alpha; v0) for d = 1 with kappa_l = l^{-p}.
inline double hn_diagnostic(double alpha, const CoeffSeq& v0, double n, double p, int d = 1) {
    if (d != 1) throw DomainError("hn_diagnostic is defined for d = 1 only");
    if (!(alpha > 0.0)) throw DomainError("hn_diagnostic: alpha must be positive");
    if (!(n > 1.0)) throw DomainError("hn_diagnostic: n must exceed 1");
    const double e = 1.0 + 2.0 * alpha + 2.0 * p;
    double sum = 0.0;
    for (std::size_t l = 1; l < v0.coeffs.size(); ++l) {
        const double ell = static_cast<double>(l + 1);
        const double a = std::pow(ell, 1.0 + 2.0 * alpha);
        const double den = a * std::pow(ell, 2.0 * p) + n;
        sum += n * n * a * v0.coeffs[l] * v0.coeffs[l] * std::log(ell) / (den * den);
    }
    return e / (std::pow(n, 1.0 / e) * std::log(n)) * sum;
}

struct AlphaBracket {
    double lower = 0.0;
    double upper = std::numeric_limits<double>::infinity();
};

/// Grid version of the lower and upper bracketing smoothness levels:
/// lower = inf{alpha : h_n > l} ^ sqrt(log n), upper = inf{alpha : h_n > L (log n)^2}.
inline AlphaBracket alpha_bracket(const CoeffSeq& v0, double n, double p, double l, double L,
                                  const std::vector<double>& grid) {
    AlphaBracket b;
    b.lower = std::sqrt(std::log(n));
    const double big = L * std::log(n) * std::log(n);
    bool have_lower = false;
    for (double a : grid) {
        if (!(a > 0.0)) continue;
        const double h = hn_diagnostic(a, v0, n, p, 1);
        if (!have_lower && h > l) b.lower = std::min(b.lower, a), have_lower = true;
        if (h > big) {
            b.upper = a;
            break;
        }
    }
    return b;
}

/// ceil(8 n^{d/(2 alpha_min + 2p + d)}), capped at 2^17.
inline std::size_t default_truncation(double n, int d, double p, double alpha_min = 0.5) {
    const double N = std::ceil(8.0 * std::pow(n, d / (2.0 * alpha_min + 2.0 * p + d)));
    return static_cast<std::size_t>(std::min(N, 131072.0));
}

}  // namespace pdelin
