#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "ghmc/predict.hpp"
#include "oracles.hpp"

using namespace ghmc;

namespace {

Matrix random_spd(Eigen::Index d, std::mt19937_64 &rng) {
    const Matrix a = oracle::gaussian(d, d, rng);
    return a * a.transpose() + 0.5 * Matrix::Identity(d, d);
}

ProductState epca_constant_state(const Vector &mu, Eigen::Index n, Eigen::Index k) {
    PPCAParams p;
    p.U = Matrix::Identity(mu.size(), k);
    p.log_lambda = Vector::Zero(k);
    p.mu = mu;
    p.Z = Matrix::Zero(n, k);
    return epca_state(p);
}

} // namespace

TEST(ConditionalMean, DiagonalCovarianceIgnoresObservations) {
    const Matrix sigma = Vector(Eigen::Vector4d(1, 2, 3, 4)).asDiagonal();
    const Vector mu = Eigen::Vector4d(0.1, -0.2, 0.3, 0.4);
    const Vector out = gaussian_conditional_mean(sigma, mu, {0, 2}, Eigen::Vector2d(5, -7), {1, 3});
    EXPECT_NEAR(out(0), -0.2, 1e-15);
    EXPECT_NEAR(out(1), 0.4, 1e-15);
}

TEST(ConditionalMean, TwoDimensionalExample) {
    Matrix sigma(2, 2);
    sigma << 1.0, 0.5, 0.5, 1.0;
    const Vector out = gaussian_conditional_mean(sigma, Vector::Zero(2), {1}, Vector::Ones(1), {0});
    EXPECT_NEAR(out(0), 0.5, 1e-15);
}

TEST(ConditionalMean, EmptyObservedSetReturnsMean) {
    std::mt19937_64 rng(51);
    const Matrix sigma = random_spd(4, rng);
    const Vector mu = oracle::gaussian(4, 1, rng);
    const Vector out = gaussian_conditional_mean(sigma, mu, {}, Vector(0), {3, 1});
    EXPECT_EQ(out(0), mu(3));
    EXPECT_EQ(out(1), mu(1));
}

TEST(ConditionalMean, MatchesExplicitInverseOracle) {
    std::mt19937_64 rng(52);
    for (int t = 0; t < 20; ++t) {
        const Matrix sigma = random_spd(6, rng);
        const Vector mu = oracle::gaussian(6, 1, rng);
        const IndexList obs{0, 2, 5}, tgt{1, 4};
        const Vector y = oracle::gaussian(3, 1, rng);
        Matrix sbb(3, 3), sab(2, 3);
        Vector r(3);
        for (int b = 0; b < 3; ++b) {
            r(b) = y(b) - mu(obs[b]);
            for (int c = 0; c < 3; ++c) sbb(b, c) = sigma(obs[b], obs[c]);
            for (int a = 0; a < 2; ++a) sab(a, b) = sigma(tgt[a], obs[b]);
        }
        const Vector expect = Vector(Eigen::Vector2d(mu(1), mu(4))) + sab * sbb.inverse() * r;
        EXPECT_LT((gaussian_conditional_mean(sigma, mu, obs, y, tgt) - expect).norm(), 1e-10);
    }
}

TEST(ConditionalMean, SingularBlockThrows) {
    Matrix sigma = Matrix::Ones(3, 3);
    sigma(2, 2) = 2.0;
    EXPECT_THROW(gaussian_conditional_mean(sigma, Vector::Zero(3), {0, 1}, Vector::Ones(2), {2}), NumericalError);
}

TEST(ConditionalMean, BadIndexSetsThrow) {
    const Matrix sigma = Matrix::Identity(3, 3);
    EXPECT_THROW(gaussian_conditional_mean(sigma, Vector::Zero(3), {0}, Vector::Ones(1), {0}), std::invalid_argument);
    EXPECT_THROW(gaussian_conditional_mean(sigma, Vector::Zero(3), {3}, Vector::Ones(1), {0}), std::invalid_argument);
    EXPECT_THROW(gaussian_conditional_mean(sigma, Vector::Zero(3), {0, 0}, Vector::Ones(2), {1}), std::invalid_argument);
    EXPECT_THROW(gaussian_conditional_mean(sigma, Vector::Zero(3), {0}, Vector::Ones(2), {1}), std::invalid_argument);
}

TEST(Reconstruct, ConfidentCorrectSampleHasZeroError) {
    // columns 0 and 2 are all ones, column 1 all zeros
    Matrix truth(5, 3);
    truth.col(0).setOnes();
    truth.col(1).setZero();
    truth.col(2).setOnes();
    MaskedDataMatrix data(truth, Mask::Constant(5, 3, true), DataKind::Binary);
    data.mask(1, 1) = false;
    const ProductState s = epca_constant_state(Eigen::Vector3d(40, -40, 40), 5, 2);
    const Reconstruction r = posterior_reconstruct({s}, ModelTag::EpcaBernoulli, data, &truth);
    ASSERT_TRUE(r.error.has_value());
    EXPECT_EQ(*r.error, 0.0);
    EXPECT_EQ(r.evaluated_entries, 15);
    EXPECT_EQ(binary_sample_error(s, truth), 0.0);
}

TEST(Reconstruct, BinaryAveragesProbabilitiesThenThresholds) {
    // two states with p = 0.9 and p = 0.2 on one entry average to 0.55 -> 1;
    // the constant-zero predictor gives exactly 1/2, which resolves to 0
    Matrix truth = Matrix::Zero(1, 2);
    const MaskedDataMatrix data = MaskedDataMatrix::fully_observed(truth, DataKind::Binary);
    const auto logit = [](double p) { return std::log(p / (1 - p)); };
    const ProductState a = epca_constant_state(Eigen::Vector2d(logit(0.9), 0.0), 1, 1);
    const ProductState b = epca_constant_state(Eigen::Vector2d(logit(0.2), 0.0), 1, 1);
    const Reconstruction r = posterior_reconstruct({a, b}, ModelTag::EpcaBernoulli, data, &truth);
    EXPECT_NEAR(r.posterior_mean(0, 0), 0.55, 1e-12);
    EXPECT_EQ(r.posterior_mean(0, 1), 0.5);
    EXPECT_EQ(r.values(0, 0), 1.0);
    EXPECT_EQ(r.values(0, 1), 0.0);
    EXPECT_EQ(*r.error, 0.5);
}

TEST(Reconstruct, ContinuousMeanAbsoluteErrorOverMissingEntries) {
    std::mt19937_64 rng(53);
    PPCAParams p;
    p.U = oracle::random_orthonormal(4, 2, rng);
    p.log_lambda = oracle::gaussian(2, 1, rng);
    p.mu = oracle::gaussian(4, 1, rng);
    p.Z = oracle::gaussian(6, 2, rng);
    const Matrix truth = oracle::gaussian(6, 4, rng);
    Mask mask = Mask::Constant(6, 4, true);
    mask(0, 1) = mask(3, 3) = mask(5, 0) = false;
    const MaskedDataMatrix data(truth, mask, DataKind::Continuous);
    const ProductState s = ppca_latent_state(p);
    const Reconstruction r = posterior_reconstruct({s, s}, ModelTag::PpcaLatent, data, &truth);
    const Matrix pred = p.Z * p.log_lambda.array().exp().matrix().asDiagonal() * p.U.transpose();
    double mae = 0.0;
    for (auto [i, j] : {std::pair{0, 1}, {3, 3}, {5, 0}}) {
        const double v = pred(i, j) + p.mu(j);
        EXPECT_NEAR(r.values(i, j), v, 1e-12);
        mae += std::abs(v - truth(i, j)) / 3.0;
    }
    EXPECT_EQ(r.values(2, 2), truth(2, 2));
    EXPECT_EQ(r.evaluated_entries, 3);
    EXPECT_NEAR(*r.error, mae, 1e-12);
}

TEST(Reconstruct, NothingMissingIsNotApplicable) {
    std::mt19937_64 rng(54);
    PPCAParams p;
    p.U = oracle::random_orthonormal(3, 1, rng);
    p.log_lambda = Vector::Zero(1);
    p.mu = Vector::Zero(3);
    p.Z = Matrix::Zero(4, 1);
    const Matrix truth = oracle::gaussian(4, 3, rng);
    const Reconstruction r = posterior_reconstruct({ppca_latent_state(p)}, ModelTag::PpcaLatent,
                                                   MaskedDataMatrix::fully_observed(truth, DataKind::Continuous), &truth);
    EXPECT_FALSE(r.error.has_value());
    EXPECT_EQ(r.evaluated_entries, 0);
}

TEST(Reconstruct, EmptyWindowAndShapeMismatchThrow) {
    const MaskedDataMatrix data = MaskedDataMatrix::fully_observed(Matrix::Zero(2, 2), DataKind::Binary);
    EXPECT_THROW(posterior_reconstruct({}, ModelTag::EpcaBernoulli, data), std::invalid_argument);
    const ProductState s = epca_constant_state(Eigen::Vector3d(0, 0, 0), 2, 1);
    EXPECT_THROW(posterior_reconstruct({s}, ModelTag::EpcaBernoulli, data), std::invalid_argument);
    EXPECT_THROW(ReconstructionAccumulator(ModelTag::FaGrassmann), std::invalid_argument);
}

TEST(PoissonLatentMode, StationaryAndBetterThanNeighbours) {
    std::mt19937_64 rng(55);
    for (int t = 0; t < 10; ++t) {
        const Matrix w = 0.5 * oracle::gaussian(8, 3, rng);
        const Vector mu = 0.3 * oracle::gaussian(8, 1, rng);
        std::poisson_distribution<int> pois(3.0);
        Vector x(8);
        for (Eigen::Index i = 0; i < 8; ++i) x(i) = pois(rng);
        const Vector z = poisson_latent_mode(w, mu, x);
        const Vector rate = (w * z + mu).array().exp();
        EXPECT_LT((w.transpose() * (x - rate) - z).norm(), 1e-6);
        auto f = [&](const Vector &v) {
            const Vector eta = w * v + mu;
            return x.dot(eta) - eta.array().exp().sum() - 0.5 * v.squaredNorm();
        };
        for (int p = 0; p < 20; ++p) EXPECT_GE(f(z), f(z + 0.01 * oracle::gaussian(3, 1, rng)));
    }
}

TEST(JointPredict, ZeroCoefficientsGiveOneHalf) {
    std::mt19937_64 rng(56);
    JointModelParams p;
    p.U = oracle::random_orthonormal(5, 2, rng);
    p.log_lambda = Vector::Zero(2);
    p.mu = Vector::Zero(5);
    p.Z = Matrix::Zero(3, 2);
    p.beta = Vector::Zero(2);
    p.beta0 = 0.0;
    const Vector prob = joint_predict_probability({joint_state(p)}, Matrix::Ones(4, 5));
    for (Eigen::Index i = 0; i < 4; ++i) EXPECT_NEAR(prob(i), 0.5, 1e-15);
}

TEST(JointPredict, AveragesStatesAtTheirOwnModes) {
    std::mt19937_64 rng(57);
    JointModelParams p;
    p.U = oracle::random_orthonormal(5, 2, rng);
    p.log_lambda = Vector::Zero(2);
    p.mu = Vector::Zero(5);
    p.Z = Matrix::Zero(3, 2);
    p.beta = Eigen::Vector2d(1.5, -0.5);
    p.beta0 = 0.2;
    JointModelParams q = p;
    q.U = -p.U; // sign flip of U with the matching flip of beta describes the same model
    q.beta = -p.beta;
    Matrix x(2, 5);
    x << 0, 1, 4, 2, 0, 3, 0, 0, 1, 5;
    const Vector a = joint_predict_probability({joint_state(p)}, x);
    const Vector b = joint_predict_probability({joint_state(q)}, x);
    const Vector both = joint_predict_probability({joint_state(p), joint_state(q)}, x);
    EXPECT_LT((a - b).norm(), 1e-8);
    EXPECT_LT((both - a).norm(), 1e-8);
    for (Eigen::Index j = 0; j < 2; ++j) {
        const Vector z = poisson_latent_mode(p.U, p.mu, x.row(j).transpose());
        EXPECT_NEAR(a(j), logistic(p.beta.dot(z) + p.beta0), 1e-12);
    }
}

TEST(OrderByScale, SortsScalesAndKeepsPredictor) {
    std::mt19937_64 rng(58);
    JointModelParams p;
    p.U = oracle::random_orthonormal(5, 3, rng);
    p.log_lambda = Eigen::Vector3d(-0.5, 1.0, 0.2);
    p.mu = oracle::gaussian(5, 1, rng);
    p.Z = oracle::gaussian(4, 3, rng);
    p.beta = Eigen::Vector3d(1, 2, 3);
    p.beta0 = 0.0;
    const ProductState s = joint_state(p);
    const ProductState o = order_by_scale(s);
    const Vector ll = o.value("log_lambda");
    EXPECT_GE(ll(0), ll(1));
    EXPECT_GE(ll(1), ll(2));
    EXPECT_EQ(o.value("beta")(0, 0), 2.0);
    EXPECT_LT((predictive_mean(ModelTag::JointPoissonLogistic, o) - predictive_mean(ModelTag::JointPoissonLogistic, s))
                  .norm(),
              1e-12);
    EXPECT_LT(((o.value("Z") * o.value("beta")) - (s.value("Z") * s.value("beta"))).norm(), 1e-12);
}
