#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "gpra/gpr.hpp"

using namespace gpra;

namespace {

Matrix uniform_points(int p, int d, unsigned seed, double lo = 0.0, double hi = 1.0) {
    std::mt19937 gen(seed);
    std::uniform_real_distribution<double> u(lo, hi);
    Matrix x(p, d);
    for (int i = 0; i < p; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = u(gen);
    return x;
}

Matrix dense_kernel(const KernelSpec &spec, const Matrix &x) {
    Matrix k(x.rows(), x.rows());
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.rows(); ++j) k(i, j) = kernel_eval(spec, x.row(i), x.row(j));
    return k;
}

KernelSpec se(double sf, double l) { return {KernelKind::SE, sf, Vector::Constant(1, l)}; }

}  // namespace

TEST(Kernel, ZeroDistanceGivesSignalVariance) {
    const Vector a = Vector::LinSpaced(3, -1.0, 2.0);
    EXPECT_DOUBLE_EQ(kernel_eval(se(1.7, 0.3), a, a), 1.7 * 1.7);
    const KernelSpec ard{KernelKind::ARD, 0.4, Vector::LinSpaced(3, 0.5, 2.0)};
    EXPECT_DOUBLE_EQ(kernel_eval(ard, a, a), 0.16);
}

TEST(Kernel, DirectSubstitution) {
    Vector a(2), b(2);
    a << 0.0, 0.0;
    b << 1.0, 1.0;
    EXPECT_NEAR(kernel_eval(se(1.0, 1.0), a, b), std::exp(-1.0), 1e-16);
}

TEST(Kernel, ArdWithEqualScalesMatchesSe) {
    const Matrix pts = uniform_points(40, 4, 3, -2.0, 2.0);
    const KernelSpec ard{KernelKind::ARD, 1.3, Vector::Constant(4, 0.7)};
    const KernelSpec iso = se(1.3, 0.7);
    for (int i = 0; i + 1 < pts.rows(); i += 2) {
        EXPECT_NEAR(kernel_eval(ard, pts.row(i), pts.row(i + 1)), kernel_eval(iso, pts.row(i), pts.row(i + 1)), 1e-15);
    }
}

TEST(Kernel, SymmetricExactly) {
    const Matrix pts = uniform_points(30, 3, 5);
    const KernelSpec ard{KernelKind::ARD, 0.9, Vector::LinSpaced(3, 0.2, 1.1)};
    for (int i = 0; i < 30; ++i)
        for (int j = 0; j < 30; ++j) EXPECT_EQ(kernel_eval(ard, pts.row(i), pts.row(j)), kernel_eval(ard, pts.row(j), pts.row(i)));
}

TEST(Kernel, DimensionMismatch) {
    EXPECT_THROW(kernel_eval(se(1, 1), Vector::Zero(2), Vector::Zero(3)), DimensionMismatch);
    const KernelSpec ard{KernelKind::ARD, 1.0, Vector::Ones(2)};
    EXPECT_THROW(kernel_eval(ard, Vector::Zero(3), Vector::Zero(3)), DimensionMismatch);
}

TEST(Kernel, MatrixWithJitterIsPositiveDefinite) {
    // Nearly coincident points make the raw matrix singular to roundoff.
    Matrix x = uniform_points(60, 2, 9);
    x.row(1) = x.row(0).array() + 1e-9;
    const Matrix k = dense_kernel(se(1.0, 2.0), x);
    Matrix with_jitter = k;
    with_jitter.diagonal().array() += kDefaultJitter;
    EXPECT_NO_THROW(cholesky_lower(SymMatrix(with_jitter)));
}

TEST(MarginalLikelihood, IdentityClosedForm) {
    Matrix x(2, 1);
    x << 0.0, 1000.0;
    Vector y(2);
    y << 1.0, 1.0;
    EXPECT_NEAR(log_marginal_likelihood(se(1.0, 1.0), 0.0, x, y), -1.0 - std::log(2.0 * std::numbers::pi), 1e-14);
}

TEST(MarginalLikelihood, SingleObservationRejected) {
    EXPECT_THROW(log_marginal_likelihood(se(1.0, 1.0), 0.1, Matrix::Zero(1, 1), Vector::Zero(1)), InvalidArgument);
}

TEST(MarginalLikelihood, MatchesExplicitInverse) {
    std::mt19937 gen(11);
    std::normal_distribution<double> g;
    for (int p = 2; p <= 5; ++p) {
        const Matrix x = uniform_points(p, 2, 20 + p);
        Vector y(p);
        for (int i = 0; i < p; ++i) y[i] = g(gen);
        const KernelSpec ard{KernelKind::ARD, 1.4, Vector::LinSpaced(2, 0.3, 0.8)};
        const double noise = 0.05;
        Matrix k = dense_kernel(ard, x);
        k.diagonal().array() += noise;
        const double expected = -0.5 * y.dot(k.inverse() * y) - 0.5 * std::log(k.determinant()) -
                                0.5 * p * std::log(2.0 * std::numbers::pi);
        EXPECT_NEAR(log_marginal_likelihood(ard, noise, x, y), expected, 1e-10 * std::abs(expected)) << "P=" << p;
    }
}

TEST(Fit, ConstantResponse) {
    const Matrix x = uniform_points(15, 2, 1);
    const Vector y = Vector::Constant(15, 3.25);
    const GprModel m = fit(x, y, KernelKind::SE);
    for (int i = 0; i < 15; ++i) EXPECT_NEAR(predict(m, x.row(i)), 3.25, 1e-6);
    EXPECT_NEAR(predict(m, Vector::Constant(2, 50.0)), 3.25, 1e-6);
}

TEST(Fit, NoiselessLinearFunctionInterpolated) {
    const Matrix x = Vector::LinSpaced(20, 0.0, 1.0);
    const Vector y = (2.0 * x.col(0).array() - 0.5).matrix();
    const GprModel m = fit(x, y, KernelKind::SE);
    const Vector fitted = predict_batch(m, x);
    EXPECT_LT((fitted - y).cwiseAbs().maxCoeff(), 1e-4);
}

TEST(Fit, NonFiniteResponseRejected) {
    const Matrix x = uniform_points(10, 1, 2);
    Vector y = x.col(0);
    y[4] = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(fit(x, y, KernelKind::SE), FitFailed);
}

TEST(Fit, WeightsSolveRegularizedSystem) {
    const Matrix x = uniform_points(80, 3, 4);
    const Vector y = (x.col(0).array().sin() + x.col(1).array() * x.col(2).array()).matrix();
    for (const auto kind : {KernelKind::SE, KernelKind::ARD}) {
        const GprModel m = fit(x, y, kind);
        Matrix k = dense_kernel(m.kernel, x);
        k.diagonal().array() += m.noise_var;
        const Vector yc = (y.array() - m.mean).matrix();
        const Vector residual = k * m.weights - yc;
        // Normwise relative residual of the regularized system.
        const double scale = k.norm() * m.weights.norm() + yc.norm();
        EXPECT_LE(residual.norm(), 1e-8 * scale);
        EXPECT_EQ(m.kernel.length_scales.size(), kind == KernelKind::SE ? 1 : 3);
    }
}

TEST(Fit, InterpolatesAtJitterNoise) {
    // In-sample predictions reproduce smooth responses when the noise is the
    // default jitter.
    for (unsigned seed = 1; seed <= 3; ++seed) {
        const Matrix x = uniform_points(120, 2, 30 + seed, -1.0, 1.0);
        const Vector y = (x.col(0).array().exp() + 0.5 * x.col(1).array().square() + 2.0).matrix();
        const GprModel m = fit(x, y, KernelKind::ARD);
        const Vector fitted = predict_batch(m, x);
        const double rel = ((fitted - y).array() / y.array()).abs().maxCoeff();
        EXPECT_LE(rel, 1e-4) << "seed " << seed;
    }
}

TEST(Fit, FindsLikelihoodMaximumLocally) {
    const Matrix x = uniform_points(50, 2, 8);
    const Vector y = (3.0 * x.col(0).array()).sin().matrix() + x.col(1);
    const GprModel m = fit(x, y, KernelKind::ARD);
    const Vector yc = y.array() - m.mean;
    const double at_fit = log_marginal_likelihood(m.kernel, m.noise_var, x, yc);
    EXPECT_NEAR(at_fit, m.log_likelihood, 1e-6 * std::abs(at_fit));
    for (int c = 0; c < 3; ++c) {
        for (const double step : {-0.05, 0.05}) {
            KernelSpec k = m.kernel;
            if (c == 0) k.signal_std *= std::exp(step);
            else k.length_scales[c - 1] *= std::exp(step);
            EXPECT_LE(log_marginal_likelihood(k, m.noise_var, x, yc), at_fit + 1e-3) << "coordinate " << c;
        }
    }
}

TEST(Fit, ScalingResponsesScalesPredictions) {
    const Matrix x = uniform_points(60, 2, 12);
    const Vector y = (x.col(0).array() * 2.0).cos().matrix() + x.col(1).cwiseAbs2();
    const GprModel a = fit(x, y, KernelKind::SE);
    const GprModel b = fit(x, 7.5 * y, KernelKind::SE);
    const Matrix probe = uniform_points(25, 2, 13);
    const Vector pa = predict_batch(a, probe);
    const Vector pb = predict_batch(b, probe);
    EXPECT_LE((pb - 7.5 * pa).cwiseAbs().maxCoeff(), 1e-3 * 7.5 * pa.cwiseAbs().maxCoeff());
}

TEST(Fit, EstimatedNoiseRespectsFloor) {
    const Matrix x = uniform_points(100, 1, 14);
    const Vector y = x.col(0).cwiseAbs2();
    FitOptions opts;
    opts.jitter = 1e-3;
    opts.estimate_noise = true;
    const GprModel m = fit(x, y, KernelKind::SE, opts);
    EXPECT_GE(m.noise_ratio, 1e-3 * (1.0 - 1e-12));
    EXPECT_LE(m.noise_ratio, 1e3 * (1.0 + 1e-12));
}

TEST(Fit, WarmStartKeepsQuality) {
    const Matrix x = uniform_points(80, 2, 15);
    const Vector y = (x.col(0) - x.col(1)).array().exp().matrix();
    const GprModel cold = fit(x, y, KernelKind::ARD);
    FitOptions opts;
    opts.warm_start = cold.kernel;
    const GprModel warm = fit(x, 1.01 * y, KernelKind::ARD, opts);
    EXPECT_LE((predict_batch(warm, x) - 1.01 * y).cwiseAbs().maxCoeff(), 1e-3);
}

TEST(Predict, FarPointRevertsToMean) {
    const Matrix x = uniform_points(30, 2, 16);
    const Vector y = x.col(0) + 2.0 * x.col(1);
    const GprModel m = fit(x, y, KernelKind::SE);
    const Vector far = Vector::Constant(2, 1e3);
    EXPECT_NEAR(predict(m, far) - m.mean, 0.0, 1e-12);
}

TEST(Predict, TrainingPointLimit) {
    const Matrix x = uniform_points(25, 1, 17);
    const Vector y = x.col(0).array().sin().matrix();
    const GprModel m = fit(x, y, KernelKind::SE);
    for (int q = 0; q < 25; ++q) EXPECT_NEAR(predict(m, x.row(q)), y[q], 1e-5);
}

TEST(Predict, BatchEqualsLoop) {
    const Matrix x = uniform_points(70, 3, 18);
    const Vector y = x.rowwise().squaredNorm();
    const GprModel m = fit(x, y, KernelKind::ARD);
    const Matrix probe = uniform_points(40, 3, 19, -0.5, 1.5);
    const Vector batch = predict_batch(m, probe);
    // Both sums see the same terms; only their rounding differs.
    const double scale = std::abs(m.mean) + m.kernel.signal_std * m.kernel.signal_std * m.weights.lpNorm<1>();
    for (int i = 0; i < 40; ++i) EXPECT_NEAR(batch[i], predict(m, probe.row(i)), 1e-12 * scale);
}

TEST(Predict, DimensionMismatch) {
    const Matrix x = uniform_points(10, 2, 20);
    const GprModel m = fit(x, x.col(0), KernelKind::SE);
    EXPECT_THROW(predict(m, Vector::Zero(3)), DimensionMismatch);
    EXPECT_THROW(predict_batch(m, Matrix::Zero(4, 1)), DimensionMismatch);
}
