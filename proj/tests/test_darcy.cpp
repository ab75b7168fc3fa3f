#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include <pdelin/pdes.hpp>

using namespace pdelin;
using std::numbers::pi;

namespace {

// u* = ((x + 1/2)^2 + (y + 1/2)^2) / 2, f* = 1 + 0.3 sin(2x) cos(y).
double ustar(double x, double y) { return 0.5 * ((x + 0.5) * (x + 0.5) + (y + 0.5) * (y + 0.5)); }
double fstar(double x, double y) { return 1 + 0.3 * std::sin(2 * x) * std::cos(y); }
double rhs(double x, double y) {
    const double fx = 0.6 * std::cos(2 * x) * std::cos(y), fy = -0.3 * std::sin(2 * x) * std::sin(y);
    return fx * (x + 0.5) + fy * (y + 0.5) + 2 * fstar(x, y);
}

DarcyGrid manufactured(double delta) {
    return darcy_grid_from_functions(
        delta, ustar, [](double x, double y) { return std::pair{x + 0.5, y + 0.5}; }, [](double, double) { return 2.0; }, rhs,
        fstar);
}

double max_error(const CharacteristicsResult& r) {
    double e = 0;
    for (std::size_t k = 0; k < r.alpha.size(); ++k) {
        auto p = r.alpha.grid.point(k);
        e = std::max(e, std::abs(r.alpha[k] - fstar(p[0], p[1])));
    }
    return e;
}

}  // namespace

TEST(DarcyCharacteristics, RefinementRate) {
    std::vector<double> err;
    for (double d : {1.0 / 32, 1.0 / 64, 1.0 / 128}) {
        auto r = darcy_characteristics(manufactured(d));
        EXPECT_GT(r.C, 0.0);
        EXPECT_EQ(r.nonmonotone_links, 0u);
        EXPECT_EQ(r.cycles_resolved, 0u);
        err.push_back(max_error(r));
    }
    for (std::size_t k = 1; k < err.size(); ++k) {
        EXPECT_LT(err[k], err[k - 1]);
        const double dec = std::log2(err[k - 1] / err[k]);
        EXPECT_GE(dec, 0.25);
        EXPECT_LE(dec, 1.5);
    }
}

TEST(DarcyCharacteristics, ConstantCoefficientSmallGradientBranch) {
    // u = |x - c|^2 with f = 1 gives g = 4; small-gradient nodes return exactly 1.
    const double delta = 1.0 / 64;
    auto dg = darcy_grid_from_functions(
        delta, [](double x, double y) { return (x - .5) * (x - .5) + (y - .5) * (y - .5); },
        [](double x, double y) { return std::pair{2 * (x - .5), 2 * (y - .5)}; }, [](double, double) { return 4.0; },
        [](double, double) { return 4.0; }, [](double, double) { return 1.0; });
    auto r = darcy_characteristics(dg);
    EXPECT_GT(r.first_branch, 0u);
    EXPECT_GT(r.cycles_resolved, 0u);
    std::size_t center = 32 * 65 + 32;
    EXPECT_EQ(r.alpha[center], 1.0);
    for (std::size_t k = 0; k < r.alpha.size(); ++k) EXPECT_NEAR(r.alpha[k], 1.0, 1e-12);
}

TEST(DarcyCharacteristics, RefusesNonPositiveC) {
    auto dg = darcy_grid_from_functions(
        0.125, [](double, double) { return 0.0; }, [](double, double) { return std::pair{0.0, 0.0}; },
        [](double, double) { return -1.0; }, [](double, double) { return 1.0; }, {});
    EXPECT_THROW(darcy_characteristics(dg), PreconditionError);
}

TEST(DarcyCharacteristics, MissingInfluxIsConfigError) {
    auto dg = manufactured(1.0 / 16);
    dg.influx = {};
    EXPECT_THROW(darcy_characteristics(dg), ConfigError);
}

TEST(DarcyCharacteristics, RejectsNonIntegerSpacing) {
    EXPECT_THROW(manufactured(0.3), DomainError);
}

TEST(DarcyCharacteristics, FromFiniteDifferenceData) {
    // Laplacian v = 2 and rhs from the manufactured pair; u recovered by solving.
    ProblemSpec s;
    s.family = Family::darcyNd;
    s.d = 2;
    s.g = [](std::span<const double> p) { return ustar(p[0], p[1]); };
    s.h = [](std::span<const double> p) { return rhs(p[0], p[1]); };
    s.influx = fstar;
    auto g = Grid::uniform({64, 64});
    auto v = GridFunction::sample(g, [](std::span<const double>) { return 2.0; });
    auto f = solution_operator(s, v);
    double e = 0;
    for (std::size_t k = 0; k < f.size(); ++k) {
        auto p = g.point(k);
        e = std::max(e, std::abs(f[k] - fstar(p[0], p[1])));
    }
    EXPECT_LT(e, 0.1);
}

TEST(DarcyMultimeasure, RecoversExponentialCoefficient) {
    const int n = 64;
    auto g = Grid::uniform({n, n});
    auto fs = [](std::span<const double> p) { return std::exp(p[0] + 2 * p[1]); };
    std::vector<GridFunction> laps;
    std::vector<std::vector<double>> gx, gy;
    for (int j = 0; j < 2; ++j) {
        ProblemSpec s;
        s.family = Family::darcyNd;
        s.d = 2;
        s.g = [j](std::span<const double> p) { return p[static_cast<std::size_t>(j)]; };
        s.h = [](std::span<const double>) { return 0.0; };
        auto u = forward_solve(s, fs, g);
        laps.push_back(apply_L(s, u));
        gx.push_back(first_difference(g, u.values, 0));
        gy.push_back(first_difference(g, u.values, 1));
    }
    const double a = 1.0 / n;
    auto res = darcy_multimeasure(laps[0], laps[1], gx[0], gy[0], gx[1], gy[1], {a, a}, std::exp(3 * a), 1e6);
    double worst = 0;
    for (std::size_t k = 0; k < g.size(); ++k) {
        auto p = g.point(k);
        worst = std::max(worst, std::abs(std::log(res.f[k]) - (p[0] + 2 * p[1])));
    }
    EXPECT_LE(worst, 5e-2);
    EXPECT_LE(res.curl_residual, 1e-3);
}

TEST(DarcyMultimeasure, HarmonicMeasurementsGiveConstant) {
    const int n = 32;
    auto g = Grid::uniform({n, n});
    GridFunction zero{g, std::vector<double>(g.size(), 0.0)};
    std::vector<double> one(g.size(), 1.0), nil(g.size(), 0.0);
    auto res = darcy_multimeasure(zero, zero, one, nil, nil, one, {0.5, 0.5}, 2.0);
    for (double f : res.f.values) EXPECT_DOUBLE_EQ(f, 2.0);
    EXPECT_EQ(res.curl_residual, 0.0);
}

TEST(DarcyMultimeasure, IllConditionedRaisesWithLocation) {
    auto g = Grid::uniform({8, 8});
    GridFunction zero{g, std::vector<double>(g.size(), 0.0)};
    std::vector<double> one(g.size(), 1.0);
    try {
        darcy_multimeasure(zero, zero, one, one, one, one, {0, 0}, 1.0, 1e3);
        FAIL();
    } catch (const InversionDomainError& e) {
        EXPECT_NE(std::string(e.what()).find("at ("), std::string::npos);
    }
}
