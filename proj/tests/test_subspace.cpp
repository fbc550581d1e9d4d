#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "ghmc/subspace.hpp"
#include "oracles.hpp"

using namespace ghmc;
using std::numbers::pi;

namespace {

GrassmannPoint span(std::initializer_list<Eigen::Index> axes, Eigen::Index d) {
    Matrix x = Matrix::Zero(d, static_cast<Eigen::Index>(axes.size()));
    Eigen::Index c = 0;
    for (auto a : axes) x(a, c++) = 1.0;
    return GrassmannPoint(x);
}

GrassmannPoint random_point(Eigen::Index d, Eigen::Index k, std::mt19937_64 &rng) {
    return GrassmannPoint(oracle::random_orthonormal(d, k, rng));
}

} // namespace

TEST(PrincipalAngles, BasicCases) {
    const auto same = principal_angles(span({0, 1}, 4), span({0, 1}, 4));
    EXPECT_NEAR(same.angles.maxCoeff(), 0.0, 1e-15);

    const auto orth = principal_angles(span({0}, 2), span({1}, 2));
    EXPECT_NEAR(orth.angles(0), pi / 2, 1e-15);

    const auto mixed = principal_angles(span({0, 1}, 4), span({0, 2}, 4));
    EXPECT_NEAR(mixed.angles(0), 0.0, 1e-15);
    EXPECT_NEAR(mixed.angles(1), pi / 2, 1e-15);
}

TEST(PrincipalAngles, RotationInvariantAndOrdered) {
    std::mt19937_64 rng(1);
    for (int t = 0; t < 50; ++t) {
        const Matrix x = oracle::random_orthonormal(7, 3, rng);
        const Matrix y = oracle::random_orthonormal(7, 3, rng);
        const auto a = principal_angles(GrassmannPoint(x), GrassmannPoint(y));
        const auto b = principal_angles(GrassmannPoint(x * oracle::random_rotation(3, rng)),
                                        GrassmannPoint(y * oracle::random_rotation(3, rng)));
        EXPECT_LT((a.angles - b.angles).cwiseAbs().maxCoeff(), 1e-10);
        for (Eigen::Index j = 0; j < 3; ++j) {
            EXPECT_GE(a.angles(j), 0.0);
            EXPECT_LE(a.angles(j), pi / 2);
            if (j > 0) {
                EXPECT_LE(a.angles(j - 1), a.angles(j));
            }
        }
    }
}

TEST(PrincipalAngles, DimensionMismatchThrows) {
    EXPECT_THROW(principal_angles(span({0}, 3), span({0, 1}, 3)), std::invalid_argument);
    EXPECT_THROW(pf_distance(span({0}, 3), span({0}, 4)), std::invalid_argument);
}

TEST(PfDistance, BasicCases) {
    EXPECT_EQ(pf_distance(span({0, 2}, 5), span({0, 2}, 5)), 0.0);
    EXPECT_NEAR(pf_distance(span({0}, 2), span({1}, 2)), 1.0, 1e-15);
}

TEST(PfDistance, MatchesProjectorDifference) {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 100; ++t) {
        const Matrix x = oracle::random_orthonormal(6, 3, rng);
        const Matrix y = oracle::random_orthonormal(6, 3, rng);
        EXPECT_NEAR(pf_distance(GrassmannPoint(x), GrassmannPoint(y)), oracle::projector_distance(x, y), 1e-10);
    }
}

TEST(PfDistance, MetricAxiomsAndPythagoras) {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 300; ++t) {
        const auto x = random_point(5, 2, rng), y = random_point(5, 2, rng), z = random_point(5, 2, rng);
        const double xy = pf_distance(x, y);
        EXPECT_EQ(xy, pf_distance(y, x));
        EXPECT_LE(xy, pf_distance(x, z) + pf_distance(z, y) + 1e-12);
        EXPECT_LE(xy, std::sqrt(2.0) + 1e-12);
        const Vector th = principal_angles(x, y).angles;
        EXPECT_NEAR(xy * xy + th.array().cos().square().sum(), 2.0, 1e-10);
    }
}

TEST(GeodesicDistance, BasicCases) {
    EXPECT_NEAR(geodesic_distance(span({0, 1}, 3), span({0, 1}, 3)), 0.0, 1e-15);
    EXPECT_NEAR(geodesic_distance(span({0}, 2), span({1}, 2)), pi / 2, 1e-15);
    for (double theta : {0.05, 0.4, 1.1, 1.5}) {
        const GrassmannPoint a(Matrix(Eigen::Vector2d(1, 0)));
        const GrassmannPoint b(Matrix(Eigen::Vector2d(std::cos(theta), std::sin(theta))));
        EXPECT_NEAR(geodesic_distance(a, b), theta, 1e-12);
        EXPECT_NEAR(pf_distance(a, b), std::sin(theta), 1e-12);
        EXPECT_GE(geodesic_distance(a, b), pf_distance(a, b));
    }
}

TEST(GeodesicDistance, BoundedAndInvariant) {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 50; ++t) {
        const Matrix x = oracle::random_orthonormal(6, 3, rng);
        const Matrix y = oracle::random_orthonormal(6, 3, rng);
        const double g = geodesic_distance(GrassmannPoint(x), GrassmannPoint(y));
        EXPECT_LE(g, pi / 2 * std::sqrt(3.0));
        EXPECT_NEAR(g, geodesic_distance(GrassmannPoint(x * oracle::random_rotation(3, rng)), GrassmannPoint(y)),
                    1e-10);
    }
}

TEST(PfMean, SingleSample) {
    std::mt19937_64 rng(5);
    SubspaceChain c;
    const auto p = random_point(6, 2, rng);
    c.push_back(p);
    EXPECT_LT(pf_distance(pf_mean(c).point, p), 1e-12);
}

TEST(PfMean, BisectorOfTwoLines) {
    SubspaceChain c;
    c.push_back(GrassmannPoint(Matrix(Eigen::Vector2d(1, 0))));
    c.push_back(GrassmannPoint(Matrix(Eigen::Vector2d(1, 1).normalized())));
    const PfMean m = pf_mean(c);
    const double a = std::cos(pi / 8), b = std::sin(pi / 8);
    EXPECT_LT(pf_distance(m.point, GrassmannPoint(Matrix(Eigen::Vector2d(a, b)))), 1e-12);
    EXPECT_NEAR(pf_distance(m.point, c[0]), pf_distance(m.point, c[1]), 1e-10);
}

TEST(PfMean, TieIsFlagged) {
    SubspaceChain c;
    c.push_back(GrassmannPoint(Matrix(Eigen::Vector2d(1, 0))));
    c.push_back(GrassmannPoint(Matrix(Eigen::Vector2d(0, 1))));
    EXPECT_TRUE(pf_mean(c).ill_defined);
}

TEST(PfMean, MatchesGridSearchOnSphere) {
    // 20 random lines in R^3; exhaustive search over ~1e4 unit vectors
    std::mt19937_64 rng(6);
    SubspaceChain c;
    for (int i = 0; i < 20; ++i) c.push_back(random_point(3, 1, rng));
    auto cost = [&](const Eigen::Vector3d &u) {
        double s = 0.0;
        for (const auto &p : c.samples()) {
            const double cs = u.dot(p.matrix().col(0));
            s += 1.0 - cs * cs;
        }
        return s;
    };
    // Fibonacci lattice on the upper hemisphere (lines are ± symmetric)
    const int n = 10000;
    const double golden = pi * (3.0 - std::sqrt(5.0));
    Eigen::Vector3d best;
    double best_cost = 1e300;
    for (int i = 0; i < n; ++i) {
        const double z = 1.0 - (i + 0.5) / n;
        const double r = std::sqrt(1.0 - z * z);
        const Eigen::Vector3d u(r * std::cos(golden * i), r * std::sin(golden * i), z);
        const double v = cost(u);
        if (v < best_cost) best_cost = v, best = u;
    }
    // second 10^4-point pass: a 100 x 100 tangent-plane grid around the coarse winner
    const Eigen::Vector3d coarse = best;
    Eigen::Vector3d e1 = coarse.unitOrthogonal();
    Eigen::Vector3d e2 = coarse.cross(e1);
    for (int i = 0; i < 100; ++i)
        for (int j = 0; j < 100; ++j) {
            const double a = -0.05 + 0.1 * i / 99.0, b = -0.05 + 0.1 * j / 99.0;
            const Eigen::Vector3d u = (coarse + a * e1 + b * e2).normalized();
            const double v = cost(u);
            if (v < best_cost) best_cost = v, best = u;
        }
    const PfMean m = pf_mean(c);
    EXPECT_LT(pf_distance(m.point, GrassmannPoint(Matrix(best))), 1e-2);
    EXPECT_LE(cost(m.point.matrix().col(0)), best_cost + 1e-12);
}

TEST(PfMean, BeatsRandomPerturbations) {
    std::mt19937_64 rng(7);
    for (int chain_id = 0; chain_id < 10; ++chain_id) {
        SubspaceChain c;
        const Matrix center = oracle::random_orthonormal(6, 2, rng);
        for (int i = 0; i < 15; ++i)
            c.push_back(GrassmannPoint(oracle::gram_schmidt(center + 0.3 * oracle::gaussian(6, 2, rng))));
        const PfMean m = pf_mean(c);
        auto cost = [&](const GrassmannPoint &u) {
            double s = 0.0;
            for (const auto &p : c.samples()) s += std::pow(pf_distance(u, p), 2);
            return s;
        };
        const double best = cost(m.point);
        for (int p = 0; p < 100; ++p) {
            const Matrix dir = project_grassmann(m.point.matrix(), oracle::gaussian(6, 2, rng));
            const double r = 0.2 * std::uniform_real_distribution<double>(0.01, 1.0)(rng);
            const Flow f = grassmann_flow(m.point.matrix(), dir / dir.norm(), r);
            EXPECT_GE(cost(GrassmannPoint(orthonormalize(f.point))), best - 1e-12);
        }
    }
}

TEST(PfMean, EmptyChainThrows) { EXPECT_THROW(pf_mean(SubspaceChain{}), std::invalid_argument); }

TEST(SubspaceChain, RejectsInconsistentDimensions) {
    SubspaceChain c;
    c.push_back(span({0}, 3));
    EXPECT_THROW(c.push_back(span({0, 1}, 3)), std::invalid_argument);
}

TEST(PfTrace, ConstantChainIsZero) {
    SubspaceChain c;
    for (int i = 0; i < 5; ++i) c.push_back(span({1, 3}, 5));
    for (double v : pf_trace(c, span({1, 3}, 5))) EXPECT_EQ(v, 0.0);
    SubspaceChain one;
    one.push_back(span({0}, 2));
    EXPECT_EQ(pf_trace(one, span({0}, 2)), std::vector<double>{0.0});
}

TEST(PfTrace, ElementsArePairwiseDistances) {
    std::mt19937_64 rng(8);
    SubspaceChain c;
    for (int i = 0; i < 10; ++i) c.push_back(random_point(5, 2, rng));
    const auto ref = random_point(5, 2, rng);
    const auto tr = pf_trace(c, ref);
    ASSERT_EQ(tr.size(), 10u);
    for (std::size_t i = 0; i < tr.size(); ++i) EXPECT_EQ(tr[i], pf_distance(c[i], ref));
}
