#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <random>

#include <pdelin/inference.hpp>

using namespace pdelin;

namespace {

SeqObservation toy_obs(std::vector<double> y, double n, std::vector<double> kappa, int d = 1) {
    SeqObservation o;
    o.y = std::move(y);
    o.n = n;
    o.kappa = std::move(kappa);
    o.sign.assign(o.y.size(), 1);
    o.d = d;
    return o;
}

// Dense linear-Gaussian conditioning with a rotated forward matrix.
std::pair<Eigen::VectorXd, Eigen::MatrixXd> dense_posterior(const Eigen::MatrixXd& K, const Eigen::VectorXd& prior_var,
                                                            double n, const Eigen::VectorXd& y) {
    Eigen::MatrixXd prec = prior_var.cwiseInverse().asDiagonal();
    prec += n * K.transpose() * K;
    Eigen::MatrixXd cov = prec.inverse();
    Eigen::VectorXd mean = cov * (n * K.transpose() * y);
    return {mean, cov};
}

}  // namespace

TEST(Posterior, UnitParameters) {
    auto post = posterior(toy_obs({1.0}, 1.0, {1.0}), PriorSpec{1.0, 0.3, 1});
    EXPECT_DOUBLE_EQ(post.mean[0], 0.5);
    EXPECT_DOUBLE_EQ(post.var[0], 0.5);
}

TEST(Posterior, ZeroData) {
    PriorSpec pr{1.3, 0.7, 1};
    auto post = posterior(toy_obs(std::vector<double>(6, 0.0), 50.0, {1, .5, .3, .2, .1, .05}), pr);
    for (std::size_t l = 0; l < 6; ++l) {
        EXPECT_EQ(post.mean[l], 0.0);
        const double lam = pr.variance(l + 1);
        const double k = std::vector<double>{1, .5, .3, .2, .1, .05}[l];
        EXPECT_DOUBLE_EQ(post.var[l], lam / (1 + 50.0 * lam * k * k));
    }
}

TEST(Posterior, MatchesDenseConditioningOnRotatedModel) {
    std::mt19937_64 rng(42);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    std::normal_distribution<double> z;
    for (int inst = 0; inst < 12; ++inst) {
        const int N = 12;
        const double n = std::pow(10.0, 1 + 4 * U(rng));
        PriorSpec pr{0.5 + U(rng), 2 * U(rng), 1 + inst % 2};
        std::vector<double> kappa(N), y(N);
        Eigen::VectorXd lam(N);
        for (int l = 0; l < N; ++l) {
            kappa[l] = std::pow(l + 1.0, -1.0 - U(rng));
            y[l] = z(rng);
            lam(l) = pr.variance(l + 1);
        }
        Eigen::MatrixXd Q = Eigen::MatrixXd::NullaryExpr(N, N, [&]() { return z(rng); }).householderQr().householderQ();
        Eigen::VectorXd yv = Eigen::Map<Eigen::VectorXd>(y.data(), N);
        Eigen::MatrixXd K = Q * Eigen::Map<Eigen::VectorXd>(kappa.data(), N).asDiagonal();
        auto [mean, cov] = dense_posterior(K, lam, n, Q * yv);
        auto post = posterior(toy_obs(y, n, kappa, pr.d), pr);
        for (int l = 0; l < N; ++l) {
            EXPECT_NEAR(post.mean[l], mean(l), 1e-10 * (1 + std::abs(mean(l))));
            EXPECT_NEAR(post.var[l], cov(l, l), 1e-10 * cov(l, l));
            for (int k = 0; k < N; ++k)
                if (k != l) EXPECT_NEAR(cov(l, k), 0.0, 1e-10 * std::sqrt(cov(l, l) * cov(k, k)));
        }
    }
}

TEST(Posterior, ShrinkageBounds) {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    std::vector<double> y(40), kappa(40);
    for (int l = 0; l < 40; ++l) y[l] = z(rng), kappa[l] = 1.0 / (l + 1);
    for (double n : {1.0, 1e3, 1e8}) {
        PriorSpec pr{1.0, 1.5, 1};
        auto post = posterior(toy_obs(y, n, kappa), pr);
        for (int l = 0; l < 40; ++l) {
            const double lam = pr.variance(l + 1);
            EXPECT_LE(std::abs(post.mean[l]), n * lam * kappa[l] * std::abs(y[l]));
            EXPECT_GT(post.var[l], 0.0);
            EXPECT_LE(post.var[l], std::min(lam, 1.0 / (n * kappa[l] * kappa[l])) * (1 + 1e-15));
        }
    }
}

TEST(Posterior, TauScalingMatchesDenseOracle) {
    std::vector<double> y{0.3, -0.2, 0.1, 0.05}, kappa{1, .4, .2, .1};
    for (double c : {0.5, 2.0, 7.0}) {
        PriorSpec pr{c, 1.0, 1};
        auto post = posterior(toy_obs(y, 100, kappa), pr);
        Eigen::VectorXd lam(4);
        for (int l = 0; l < 4; ++l) lam(l) = c * c * std::pow(l + 1.0, -3.0);
        auto [mean, cov] = dense_posterior(Eigen::Map<Eigen::VectorXd>(kappa.data(), 4).asDiagonal(), lam, 100,
                                           Eigen::Map<Eigen::VectorXd>(y.data(), 4));
        for (int l = 0; l < 4; ++l) {
            EXPECT_NEAR(post.mean[l], mean(l), 1e-12);
            EXPECT_NEAR(post.var[l], cov(l, l), 1e-12);
        }
    }
}

TEST(Sampling, DegenerateVarianceReturnsMean) {
    PosteriorGaussian post;
    post.mean = {1.0, -2.0, 3.5};
    post.var = {1e-40, 1e-35, 1e-31};
    for (const auto& d : sample_posterior(post, 5, 9))
        for (int l = 0; l < 3; ++l) EXPECT_NEAR(d.coeffs[l], post.mean[l], 1e-15);
}

TEST(Sampling, CentralLimitAndDeterminism) {
    PosteriorGaussian post;
    post.mean = {0.5, -1.0, 2.0, 0.0};
    post.var = {1.0, 0.25, 4.0, 1e-6};
    const int R = 100000;
    auto m = sample_posterior_matrix(post, R, 123);
    for (int l = 0; l < 4; ++l) EXPECT_LE(std::abs(m.row(l).mean() - post.mean[l]), 4 * std::sqrt(post.var[l] / R));
    EXPECT_EQ(sample_posterior_matrix(post, 50, 7), sample_posterior_matrix(post, 50, 7));
    EXPECT_NE(sample_posterior_matrix(post, 50, 7), sample_posterior_matrix(post, 50, 8));
}

TEST(EbObjective, FirstTermConstantInAlpha) {
    auto o = toy_obs({0.7}, 1e4, {0.9});
    EXPECT_EQ(eb_objective(0.0, o), eb_objective(3.3, o));
}

TEST(EbObjective, ZeroDataIsLogSumIncreasingInN) {
    std::vector<double> kappa{1, .5, .3};
    double prev = 0;
    for (double n : {1.0, 10.0, 1e3, 1e6}) {
        const double f = eb_objective(1.0, toy_obs({0, 0, 0}, n, kappa));
        EXPECT_GT(f, prev);
        prev = f;
    }
}

TEST(EbObjective, LiteralTranscription) {
    std::vector<double> y{0.3, -0.1, 0.05, 0.2, -0.02, 0.01, 0.003, -0.004};
    std::vector<double> kappa(8);
    for (int l = 0; l < 8; ++l) kappa[l] = 1.0 / (l + 0.5);
    const double n = 250.0;
    for (double a : {0.0, 0.4, 1.0, 2.5}) {
        double lit = 0;
        for (int i = 1; i <= 8; ++i) {
            const double den = std::pow(i, 1 + 2 * a) * std::pow(kappa[i - 1], -2.0);
            lit += std::log(1 + n / den) - n * n * y[i - 1] * y[i - 1] / (den + n);
        }
        EXPECT_NEAR(eb_objective(a, toy_obs(y, n, kappa)), lit, 1e-12);
    }
}

TEST(EbObjective, EqualsMarginalLikelihoodUpToConstant) {
    std::vector<double> y{0.3, -0.1, 0.05, 0.2};
    std::vector<double> kappa{1, .5, .25, .125};
    const double n = 40.0;
    auto neg2ll = [&](double a) {
        double s = 0;
        for (int l = 0; l < 4; ++l) {
            const double v = std::pow(l + 1.0, -1 - 2 * a) * kappa[l] * kappa[l] + 1 / n;
            s += std::log(v) + y[l] * y[l] / v;
        }
        return s;
    };
    auto o = toy_obs(y, n, kappa);
    const double c0 = neg2ll(0.0) - eb_objective(0.0, o);
    for (double a : {0.3, 1.1, 3.0}) EXPECT_NEAR(neg2ll(a) - eb_objective(a, o), c0, 1e-10);
}

TEST(EbObjective, DependsOnlyOnSquares) {
    std::vector<double> y{0.3, -0.1, 0.05, 0.2}, kappa{1, .5, .25, .125};
    auto flipped = y;
    flipped[1] = -flipped[1], flipped[3] = -flipped[3];
    EXPECT_EQ(eb_objective(0.8, toy_obs(y, 9, kappa)), eb_objective(0.8, toy_obs(flipped, 9, kappa)));
}

TEST(EmpiricalBayes, ZeroSignalGoesToUpperBoundary) {
    const int N = 200;
    const double n = 1e12;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> z;
    std::vector<double> y(N), kappa(N);
    for (int l = 0; l < N; ++l) kappa[l] = 1.0 / ((l + 0.5) * 3.14159), y[l] = z(rng) / std::sqrt(n);
    auto o = toy_obs(y, n, kappa);
    auto res = empirical_bayes_alpha(o);
    double best = 0, bf = INFINITY;
    for (int j = 0; j <= 20000; ++j) {
        const double a = std::log(n) * j / 20000;
        const double f = eb_objective(a, o);
        if (f < bf) bf = f, best = a;
    }
    EXPECT_NEAR(res.alpha, best, 1e-3 * std::log(n));
    EXPECT_NEAR(res.alpha, std::log(n), 1e-9);
    EXPECT_GE(res.trace.size(), 64u);
}

TEST(EmpiricalBayes, SingleCoordinateTieGoesToZero) {
    auto res = empirical_bayes_alpha(toy_obs({0.4}, 1e5, {0.6}));
    EXPECT_EQ(res.alpha, 0.0);
}

TEST(EmpiricalBayes, MedianNearTrueSmoothness) {
    const int N = 2000;
    const double n = 1e8;
    std::vector<double> kappa(N), v0(N);
    for (int l = 0; l < N; ++l) {
        kappa[l] = 1.0 / ((l + 0.5) * 3.141592653589793);
        v0[l] = std::pow(l + 1.0, -1.5) * std::sin(l + 1.0);
    }
    std::vector<double> alphas;
    for (int r = 0; r < 50; ++r) {
        std::mt19937_64 rng(1000 + r);
        std::normal_distribution<double> z;
        std::vector<double> y(N);
        for (int l = 0; l < N; ++l) y[l] = kappa[l] * v0[l] + z(rng) / std::sqrt(n);
        auto a = empirical_bayes_alpha(toy_obs(y, n, kappa)).alpha;
        EXPECT_GE(a, 0.0);
        EXPECT_LE(a, std::log(n));
        alphas.push_back(a);
    }
    std::nth_element(alphas.begin(), alphas.begin() + 25, alphas.end());
    EXPECT_GE(alphas[25], 0.5);
    EXPECT_LE(alphas[25], 1.5);
}

TEST(Hierarchical, FlatTwoPointEqualObjectives) {
    auto w = hb_alpha_posterior(toy_obs({0.2}, 10, {1}), [](double) { return 1.0; }, {0.5, 1.5});
    EXPECT_DOUBLE_EQ(w[0], 0.5);
    EXPECT_DOUBLE_EQ(w[1], 0.5);
}

TEST(Hierarchical, NormalizedAndModeMatchesGridArgmin) {
    const int N = 300;
    const double n = 1e9;
    std::mt19937_64 rng(77);
    std::normal_distribution<double> z;
    std::vector<double> y(N), kappa(N);
    for (int l = 0; l < N; ++l) {
        kappa[l] = 1.0 / (l + 1.0);
        y[l] = kappa[l] * std::pow(l + 1.0, -1.5) + z(rng) / std::sqrt(n);
    }
    auto o = toy_obs(y, n, kappa);
    auto grid = default_hb_grid(n);
    auto w = hb_alpha_posterior(o, [](double) { return 1.0; }, grid);
    double s = 0;
    for (double x : w) s += x;
    EXPECT_NEAR(s, 1.0, 1e-12);
    auto mode = std::max_element(w.begin(), w.end()) - w.begin();
    std::size_t argmin = 0;
    for (std::size_t j = 0; j < grid.size(); ++j)
        if (eb_objective(grid[j], o) < eb_objective(grid[argmin], o)) argmin = j;
    EXPECT_EQ(static_cast<std::size_t>(mode), argmin);
    auto wd = hb_alpha_posterior(o, default_hyper_density, grid);
    for (double x : wd) EXPECT_TRUE(std::isfinite(x));
}

TEST(Hierarchical, RejectsBadGrid) {
    auto o = toy_obs({0.2}, 10, {1});
    EXPECT_THROW(hb_alpha_posterior(o, default_hyper_density, {1.0, 0.5}), DomainError);
    EXPECT_THROW(hb_alpha_posterior(o, [](double) { return 0.0; }, {0.5, 1.0}), DomainError);
}

TEST(CredibleRadius, ChiSquareQuantile) {
    PosteriorGaussian post;
    post.mean = {0.0};
    post.var = {1.0};
    EXPECT_NEAR(credible_radius(post, 0.95, 200000, 3), 1.959964, 0.02);
}

TEST(CredibleRadius, MonotoneInLevelAndVanishingAtZero) {
    PosteriorGaussian post;
    post.mean = std::vector<double>(20, 0.0);
    for (int l = 0; l < 20; ++l) post.var.push_back(1.0 / ((l + 1.0) * (l + 1.0)));
    double prev = 0;
    for (double lev : {1e-4, 0.1, 0.5, 0.9, 0.95, 0.99}) {
        const double r = credible_radius(post, lev, 2000, 11);
        EXPECT_GE(r, prev);
        prev = r;
    }
    EXPECT_LT(credible_radius(post, 1e-4, 2000, 11), 0.5 * credible_radius(post, 0.5, 2000, 11));
}

TEST(CredibleBall, ContainsCenterAndZeroTruthCase) {
    auto post = posterior(toy_obs(std::vector<double>(10, 0.0), 100, std::vector<double>(10, 0.5)), PriorSpec{1, 1, 1});
    auto ball = credible_ball(post, 0.95, 1.0, 500, 0);
    EXPECT_TRUE(ball.contains(std::vector<double>(10, 0.0)));
    EXPECT_GT(ball.radius, 0.0);
    EXPECT_THROW(credible_ball(post, 0.95, 0.5), DomainError);
}

TEST(HnDiagnostic, TrivialCases) {
    CoeffSeq zero{"v", 1, std::vector<double>(20, 0.0)};
    EXPECT_EQ(hn_diagnostic(1.0, zero, 1e6, 1.0), 0.0);
    CoeffSeq e1{"v", 1, std::vector<double>(20, 0.0)};
    e1.coeffs[0] = 1.0;
    EXPECT_EQ(hn_diagnostic(1.0, e1, 1e6, 1.0), 0.0);
    EXPECT_THROW(hn_diagnostic(1.0, e1, 1e6, 1.0, 2), DomainError);
}

TEST(HnDiagnostic, LiteralTranscription) {
    CoeffSeq v{"v", 1, {}};
    for (int i = 1; i <= 100; ++i) v.coeffs.push_back(std::pow(i, -1.2) * std::cos(i));
    const double n = 1e6, p = 1.0;
    for (double a : {0.2, 1.0, 2.7}) {
        double sum = 0;
        for (int i = 1; i <= 100; ++i) {
            const double num = n * n * std::pow(i, 1 + 2 * a) * v.coeffs[i - 1] * v.coeffs[i - 1] * std::log(i);
            const double den = std::pow(std::pow(i, 1 + 2 * a) * std::pow(i, 2 * p) + n, 2);
            sum += num / den;
        }
        const double lit = (1 + 2 * a + 2 * p) / (std::pow(n, 1 / (1 + 2 * a + 2 * p)) * std::log(n)) * sum;
        EXPECT_NEAR(hn_diagnostic(a, v, n, p), lit, 1e-12 * std::max(1.0, lit));
    }
}

TEST(HnDiagnostic, BracketIsOrdered) {
    CoeffSeq v{"v", 1, {}};
    for (int i = 1; i <= 2000; ++i) v.coeffs.push_back(std::pow(i, -1.5) * std::sin(i));
    std::vector<double> grid;
    for (int j = 1; j <= 400; ++j) grid.push_back(j * 0.01);
    auto b = alpha_bracket(v, 1e8, 1.0, 1.0, 1.0, grid);
    EXPECT_LE(b.lower, b.upper);
    EXPECT_LE(b.lower, std::sqrt(std::log(1e8)));
}

TEST(Truncation, Default) {
    EXPECT_EQ(default_truncation(1e8, 1, 2.0), 173u);
    EXPECT_EQ(default_truncation(1e300, 1, 0.1), 131072u);
}
