#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>
#include <numbers>

#include <pdelin/bases.hpp>

#include "oracles.hpp"

using namespace pdelin;
using std::numbers::pi;

namespace {

double at(const PointFn& f, double x) {
    std::vector<double> p{x};
    return f(p);
}

}  // namespace

TEST(Laplacian, LeadingKappas) {
    auto s1 = laplacian_system(1, 10);
    EXPECT_NEAR(s1.triples[0].kappa, 0.10132118364233778, 1e-15);
    EXPECT_EQ(s1.triples[0].sign, -1);
    EXPECT_EQ(s1.p, 2.0);
    auto s2 = laplacian_system(2, 4);
    EXPECT_NEAR(s2.triples[0].kappa, 1 / (2 * pi * pi), 1e-16);
    for (std::size_t l = 1; l < s2.size(); ++l) EXPECT_LE(s2.triples[l].kappa, s2.triples[l - 1].kappa);
}

TEST(Laplacian, FiniteDifferenceSmallestEigenvalue) {
    const int n = 2000;
    const double h = 1.0 / (n + 1);
    Eigen::VectorXd diag = Eigen::VectorXd::Constant(n, 2.0 / (h * h));
    Eigen::VectorXd off = Eigen::VectorXd::Constant(n - 1, -1.0 / (h * h));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es;
    es.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
    const double smallest = es.eigenvalues().minCoeff();
    auto sys = laplacian_system(1, 200);
    EXPECT_NEAR(smallest * sys.triples[0].kappa, 1.0, 1e-3);
}

TEST(Laplacian, EigenRelationByFiniteDifferences) {
    // -Delta h = (1/kappa) h, so K h = Delta^{-1} h = -kappa h.
    auto sys = laplacian_system(2, 5);
    const double e = 1e-4;
    for (std::size_t l = 0; l < 10; ++l) {
        const auto& t = sys.triples[l];
        std::vector<double> x{0.31, 0.67};
        double lap = 0;
        for (int j = 0; j < 2; ++j) {
            auto xp = x, xm = x;
            xp[j] += e, xm[j] -= e;
            lap += (t.h(xp) - 2 * t.h(x) + t.h(xm)) / (e * e);
        }
        EXPECT_NEAR(lap * t.sign * t.kappa, t.g(x), 1e-5 * (1 + std::abs(t.g(x))));
    }
}

TEST(Volterra, LeadingKappaAndClosedForm) {
    auto sys = volterra_system(50);
    EXPECT_NEAR(sys.triples[0].kappa, 2 / pi, 1e-15);
    EXPECT_NEAR(sys.triples[0].kappa * at(sys.triples[0].g, 1.0), 2 * std::sqrt(2.0) / pi, 1e-15);
}

TEST(Volterra, QuadratureOfAntiderivative) {
    auto sys = volterra_system(50);
    for (std::size_t l = 0; l < 50; ++l) {
        const auto& t = sys.triples[l];
        for (int j = 0; j <= 100; ++j) {
            const double x = j / 100.0;
            const double integral = oracle::integrate([&](double s) { return at(t.h, s); }, 0, x, 8, 20);
            EXPECT_NEAR(integral, t.sign * t.kappa * at(t.g, x), 1e-10);
        }
    }
}

TEST(Darcy1d, DirichletKappaAndZeroMean) {
    auto sys = darcy1d_system(30, Darcy1dBoundary::dirichlet);
    EXPECT_NEAR(sys.triples[0].kappa, 1 / pi, 1e-15);
    for (const auto& t : sys.triples)
        EXPECT_NEAR(oracle::integrate([&](double s) { return at(t.h, s); }, 0, 1, 16, 20), 0.0, 1e-12);
}

TEST(Darcy1d, DirichletOperatorByQuadrature) {
    auto sys = darcy1d_system(30, Darcy1dBoundary::dirichlet);
    for (const auto& t : sys.triples) {
        const double total = oracle::integrate([&](double s) { return at(t.h, s); }, 0, 1, 16, 20);
        for (int j = 0; j <= 50; ++j) {
            const double x = j / 50.0;
            const double kv = oracle::integrate([&](double s) { return at(t.h, s); }, 0, x, 8, 20) - x * total;
            EXPECT_NEAR(kv, t.kappa * at(t.g, x), 1e-10);
        }
    }
}

TEST(Darcy1d, MixedFrequencies) {
    auto sys = darcy1d_system(10, Darcy1dBoundary::mixed);
    for (int i = 0; i < 10; ++i) EXPECT_NEAR(sys.triples[i].kappa, 1 / ((i + 0.5) * pi), 1e-15);
}

TEST(AnalyticSystems, OrthonormalityAndRateBand) {
    for (const auto& sys : {laplacian_system(1, 40), volterra_system(40), darcy1d_system(40, Darcy1dBoundary::dirichlet)}) {
        const int M = 10000;
        Eigen::MatrixXd H(20, M);
        for (int j = 0; j < M; ++j) {
            std::vector<double> x{(j + 0.5) / M};
            for (int l = 0; l < 20; ++l) H(l, j) = sys.triples[l].h(x);
        }
        Eigen::MatrixXd G = H * H.transpose() / M;
        EXPECT_LT((G - Eigen::MatrixXd::Identity(20, 20)).cwiseAbs().maxCoeff(), 1e-6) << sys.id;
        for (std::size_t l = 0; l < sys.size(); ++l) {
            const double r = sys.triples[l].kappa * std::pow(l + 1.0, sys.p / sys.d);
            EXPECT_GT(r, 0.05);
            EXPECT_LT(r, 1.0);
        }
    }
}

TEST(Heat, RootLimitAndResidual) {
    for (int k = 1; k <= 5; ++k) EXPECT_NEAR(heat_root(1e-14, k), (k - 0.5) * pi, 1e-12);
    for (double mu : {0.5, pi * pi, 50.0, 5000.0})
        for (int k = 1; k <= 10; ++k) {
            const double nu = heat_root(mu, k);
            EXPECT_GT(nu, (k - 0.5) * pi);
            EXPECT_LT(nu, k * pi);
            EXPECT_LE(std::abs(nu / std::tan(nu) + mu / 2), 1e-10 * std::max(1.0, mu));
        }
}

TEST(Heat, LambdaBracketAndOrdering) {
    for (int d : {1, 2}) {
        auto sys = heat_eigensystem(d, 5, 10);
        ASSERT_EQ(sys.pairs.size(), static_cast<std::size_t>(std::pow(5, d) * 10));
        for (std::size_t l = 0; l < sys.pairs.size(); ++l) {
            const auto& e = sys.pairs[l];
            const double s = static_cast<double>(e.i.sum_sq());
            const double lo = 1 / (pi * pi * (e.k * e.k + pi * pi * s * s / 4));
            const double hi = 1 / (pi * pi * ((e.k - 0.5) * (e.k - 0.5) + pi * pi * s * s / 4));
            EXPECT_GE(e.lambda, lo);
            EXPECT_LE(e.lambda, hi);
            if (l) EXPECT_LE(e.lambda, sys.pairs[l - 1].lambda);
        }
    }
}

TEST(Heat, RootsMonotone) {
    for (int k = 1; k < 8; ++k) EXPECT_LT(heat_root(pi * pi, k), heat_root(pi * pi, k + 1));
    double prev = 0;
    for (double mu = 0.1; mu < 1000; mu *= 1.7) {
        const double nu = heat_root(mu, 2);
        EXPECT_GT(nu, prev);
        prev = nu;
    }
}

TEST(Heat, TimeFactorIsNormalized) {
    auto sys = heat_eigensystem(1, 3, 4);
    for (const auto& e : sys.pairs) {
        // Integrate over (x, t); the space factor is already L2-normalized.
        const double total = oracle::integrate(
            [&](double t) {
                return oracle::integrate(
                    [&](double x) {
                        std::vector<double> p{x, t};
                        const double v = heat_eigenfunction(e, p);
                        return v * v;
                    },
                    0, 1, 8, 16);
            },
            0, 1, 8, 16);
        EXPECT_NEAR(total, 1.0, 1e-10);
    }
}

TEST(Heat, SupNormBound) {
    for (int d : {1, 2}) {
        auto sys = heat_eigensystem(d, 5, 5);
        const double bound = 2 * std::pow(2.0, d / 2.0) * (1 + std::sqrt(2.0));
        for (const auto& e : sys.pairs) {
            double mx = 0;
            for (int a = 0; a <= 100; ++a)
                for (int b = 0; b <= 100; ++b) {
                    std::vector<double> p = d == 1 ? std::vector<double>{a / 100.0, b / 100.0}
                                                   : std::vector<double>{a / 100.0, 0.37, b / 100.0};
                    mx = std::max(mx, std::abs(heat_eigenfunction(e, p)));
                }
            EXPECT_LE(mx, bound);
        }
    }
}

TEST(DiscreteSvd, Identity) {
    auto q = trapezoid_grid(20);
    Eigen::MatrixXd A = Eigen::MatrixXd::Identity(21, 21);
    auto out = discrete_svd(A, q);
    ASSERT_EQ(out.system.size(), 21u);
    for (const auto& t : out.system.triples) EXPECT_NEAR(t.kappa, 1.0, 1e-12);
}

TEST(DiscreteSvd, VolterraSpectrum) {
    const int n = 400;
    const double h = 1.0 / n;
    QuadratureGrid q;
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        q.points.push_back({(i + 0.5) * h});
        q.weights.push_back(h);
        for (int j = 0; j < i; ++j) A(i, j) = h;
        A(i, i) = h / 2;
    }
    auto out = discrete_svd(A, q);
    for (int l = 1; l <= 20; ++l) EXPECT_NEAR(out.system.triples[l - 1].kappa * (l - 0.5) * pi, 1.0, 0.01) << l;
    EXPECT_NEAR(out.p_estimate, 1.0, 0.15);
}

TEST(DiscreteSvd, InverseLaplacianSpectrumAndSign) {
    const int n = 400;
    const double h = 1.0 / (n + 1);
    QuadratureGrid q;
    Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        q.points.push_back({(i + 1) * h});
        q.weights.push_back(h);
        L(i, i) = -2 / (h * h);
        if (i) L(i, i - 1) = L(i - 1, i) = 1 / (h * h);
    }
    Eigen::MatrixXd A = L.inverse();
    auto out = discrete_svd(A, q);
    for (int l = 1; l <= 10; ++l) {
        EXPECT_NEAR(out.system.triples[l - 1].kappa * pi * pi * l * l, 1.0, 0.01) << l;
        EXPECT_EQ(out.system.triples[l - 1].sign, -1);
    }
    // The first discrete singular function matches +-sqrt(2) sin(pi x).
    const auto& h1 = out.system.triples[0].h;
    const double s = at(h1, 0.5) > 0 ? 1 : -1;
    for (double x : {0.1, 0.3, 0.5, 0.77}) EXPECT_NEAR(s * at(h1, x), std::sqrt(2.0) * std::sin(pi * x), 1e-3);
}

TEST(DiscreteSvd, ShapeMismatch) {
    auto q = trapezoid_grid(4);
    EXPECT_THROW(discrete_svd(Eigen::MatrixXd::Identity(3, 3), q), DimensionError);
}

TEST(SystemExport, CsvColumns) {
    auto path = std::filesystem::temp_directory_path() / "pdelin_sys.csv";
    write_system_csv(path, laplacian_system(2, 2));
    auto text = io::read_text(path);
    EXPECT_EQ(text.substr(0, text.find('\n')), "ell,kappa,sign,index_tuple");
    EXPECT_NE(text.find("\n1,"), std::string::npos);
    EXPECT_NE(text.find(",-1,1;1\n"), std::string::npos);
    std::filesystem::remove(path);
}
