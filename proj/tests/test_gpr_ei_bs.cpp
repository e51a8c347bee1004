#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "gpra/gpr_ei_bs.hpp"

using namespace gpra;

namespace {

GprModel hand_model(const Matrix &train, const Vector &weights, double signal_std, double ell, double mean) {
    GprModel m;
    m.kernel.kind = KernelKind::SE;
    m.kernel.signal_std = signal_std;
    m.kernel.length_scales = Vector::Constant(1, ell);
    m.train_x = train;
    m.weights = weights;
    m.mean = mean;
    m.center = train.colwise().mean().transpose();
    return m;
}

GprModel random_model(int d, int points, unsigned seed) {
    std::mt19937 gen(seed);
    std::normal_distribution<double> g;
    Matrix x(points, d);
    Vector w(points);
    for (int i = 0; i < points; ++i) {
        for (int j = 0; j < d; ++j) x(i, j) = 0.3 * g(gen);
        w[i] = g(gen);
    }
    return hand_model(x, w, 1.7, 0.25, 0.4);
}

BsRunConfig run_with(int p_count, int n_steps = 5) {
    BsRunConfig cfg;
    cfg.p_count = p_count;
    cfg.n_steps = n_steps;
    return cfg;
}

}  // namespace

TEST(ExercisePrice, MapsDriftFreeCoordinatesBackToPrices) {
    const BsParams params = BsParams::basket(2, 100.0, 0.05, 0.2, 0.2);
    const Vector z = params.spot().array().log().matrix();
    const Vector at_zero = exercise_price_at(z, 0.0, params);
    EXPECT_NEAR(at_zero[0], 100.0, 1e-12);
    const Vector later = exercise_price_at(z, 0.5, params);
    EXPECT_NEAR(later[1], 100.0 * std::exp(0.03 * 0.5), 1e-12);
    EXPECT_THROW(exercise_price_at(Vector::Zero(3), 0.0, params), DimensionMismatch);
}

TEST(ZGridLayout, TimeInvariantCoordinates) {
    const BsParams params = BsParams::basket(3, 100.0, 0.05, 0.2, 0.2);
    const StateCloud cloud = build_state_cloud(params, 1.0, 50);
    const ZGrid grid = make_zgrid(params, cloud, 1.0, 0.1);
    for (Eigen::Index p = 0; p < 50; ++p) {
        const Vector back = exercise_price_at(grid.z_points.row(p).transpose(), 1.0, params);
        EXPECT_LE((back - cloud.points.row(p).transpose()).cwiseAbs().maxCoeff(), 1e-10 * 100.0);
    }
    EXPECT_NEAR(grid.pi(0, 1), 0.2 * 0.04 * 0.1, 1e-15);
}

TEST(EiContinuation, ZeroCovarianceReducesToDiscountedPrediction) {
    const GprModel model = random_model(2, 7, 3);
    const SymMatrix zero(Matrix::Zero(2, 2));
    Matrix targets(3, 2);
    targets << 0.0, 0.0, 0.2, -0.1, -0.4, 0.3;
    const Vector cont = ei_continuation_at(model, zero, targets, 0.1, 0.05);
    const Vector pred = predict_batch(model, targets);
    for (Eigen::Index i = 0; i < 3; ++i) EXPECT_NEAR(cont[i], std::exp(-0.005) * pred[i], 1e-12);
}

TEST(EiContinuation, UnitWeightCollapsesToOne) {
    // One training point at the origin, unit kernel, Π = 0, no discounting.
    const GprModel model = hand_model(Matrix::Zero(1, 1), Vector::Ones(1), 1.0, 1.0, 0.0);
    const Vector cont = ei_continuation_at(model, SymMatrix(Matrix::Zero(1, 1)), Matrix::Zero(1, 1), 1.0, 0.0);
    EXPECT_NEAR(cont[0], 1.0, 1e-15);
}

TEST(EiContinuation, ConstantSurrogateOnlyDiscounts) {
    GprModel model = random_model(2, 4, 5);
    model.weights.setZero();
    const Vector cont = ei_continuation_at(model, SymMatrix::identity(2), Matrix::Zero(2, 2), 0.5, 0.1);
    EXPECT_NEAR(cont[0], std::exp(-0.05) * 0.4, 1e-15);
}

TEST(EiContinuation, SingleAssetMatchesTrapezoid) {
    const GprModel model = random_model(1, 9, 11);
    const double var = 0.04 * 0.1;
    const double sd = std::sqrt(var);
    const double rate = 0.05;
    const double dt = 0.1;
    Matrix pi(1, 1);
    pi << var;
    for (const double z : {-0.5, -0.1, 0.0, 0.25, 0.7}) {
        const int n = 20000;
        const double h = 16.0 * sd / n;
        Matrix nodes(n + 1, 1);
        for (int k = 0; k <= n; ++k) nodes(k, 0) = z - 8.0 * sd + k * h;
        const Vector f = predict_batch(model, nodes);
        double sum = 0.0;
        for (int k = 0; k <= n; ++k) {
            const double x = nodes(k, 0) - z;
            const double w = (k == 0 || k == n) ? 0.5 : 1.0;
            sum += w * f[k] * std::exp(-0.5 * x * x / var);
        }
        const double expected = std::exp(-rate * dt) * sum * h / (sd * std::sqrt(2.0 * std::numbers::pi));
        Matrix target(1, 1);
        target << z;
        EXPECT_NEAR(ei_continuation_at(model, SymMatrix(pi), target, dt, rate)[0], expected, 1e-8) << "z=" << z;
    }
}

TEST(EiContinuation, TwoAssetClosedFormByHand) {
    Matrix train(1, 2);
    train << 0.1, -0.2;
    const double sf = 1.3;
    const double ell = 0.4;
    const GprModel model = hand_model(train, Vector::Constant(1, 0.7), sf, ell, 0.0);
    Matrix pi(2, 2);
    pi << 0.04, 0.01, 0.01, 0.09;
    Matrix target(1, 2);
    target << -0.05, 0.15;
    // M = Π + ℓ² I with the 2x2 inverse written out.
    const double a = pi(0, 0) + ell * ell;
    const double b = pi(0, 1);
    const double c = pi(1, 1) + ell * ell;
    const double det = a * c - b * b;
    const double dx = target(0, 0) - train(0, 0);
    const double dy = target(0, 1) - train(0, 1);
    const double quad = (c * dx * dx - 2.0 * b * dx * dy + a * dy * dy) / det;
    const double expected = 0.7 * sf * sf * ell * ell * std::exp(-0.5 * quad) / std::sqrt(det);
    EXPECT_NEAR(ei_continuation_at(model, SymMatrix(pi), target, 0.1, 0.0)[0], expected, 1e-12);
}

TEST(EiContinuation, MatchesMonteCarloInLowDimensions) {
    for (const int d : {1, 2, 3}) {
        const BsParams params = BsParams::basket(d, 100.0, 0.05, 0.3, 0.4);
        const double dt = 0.25;
        const SymMatrix pi = params.log_increment_cov(dt);
        const GprModel model = random_model(d, 12, 20 + d);
        const Matrix l = cholesky_lower(pi).matrix();
        const Vector z0 = Vector::Constant(d, 0.05);
        const int draws = 1000000;
        const int batch = 10000;
        const Vector normals = gaussian_stream(77 + d, static_cast<std::size_t>(draws) * d);
        double sum = 0.0;
        double sum_sq = 0.0;
        for (int start = 0; start < draws; start += batch) {
            Matrix pts(batch, d);
            for (int i = 0; i < batch; ++i) {
                const Vector g = normals.segment(static_cast<Eigen::Index>(start + i) * d, d);
                pts.row(i) = (z0 + l * g).transpose();
            }
            const Vector f = predict_batch(model, pts);
            sum += f.sum();
            sum_sq += f.squaredNorm();
        }
        const double mean = sum / draws;
        const double se = std::sqrt((sum_sq / draws - mean * mean) / draws);
        const double disc = std::exp(-params.rate() * dt);
        const double cont = ei_continuation_at(model, pi, z0.transpose(), dt, params.rate())[0];
        EXPECT_NEAR(cont, disc * mean, 3.0 * disc * se) << "d=" << d;
    }
}

TEST(EiContinuation, ArdKernelAndBadDimensionsRejected) {
    GprModel model = random_model(2, 3, 1);
    EXPECT_THROW(ei_continuation_at(model, SymMatrix::identity(3), Matrix::Zero(1, 2), 0.1, 0.0), DimensionMismatch);
    model.kernel.kind = KernelKind::ARD;
    model.kernel.length_scales = Vector::Ones(2);
    EXPECT_THROW(ei_continuation_at(model, SymMatrix::identity(2), Matrix::Zero(1, 2), 0.1, 0.0), InvalidArgument);
}

TEST(EiPricer, PriceAtLeastExerciseAndDeterministic) {
    const BsParams params = BsParams::basket(3, 90.0, 0.05, 0.2, 0.2);
    const Payoff payoff(PayoffKind::ArithmeticPut, 100.0);
    const PriceReport a = price_gpr_ei_bs(params, payoff, run_with(200));
    const PriceReport b = price_gpr_ei_bs(params, payoff, run_with(200));
    EXPECT_GE(a.price, payoff_eval(payoff, params.spot()));
    EXPECT_EQ(a.price, b.price);
    EXPECT_EQ(a.method, "gpr-ei");
    EXPECT_EQ(a.steps.size(), 5u);
}

TEST(EiPricer, ZeroPayoffPricesToZero) {
    const BsParams params = BsParams::basket(2, 100.0, 0.05, 0.2, 0.2);
    EXPECT_EQ(price_gpr_ei_bs(params, Payoff(PayoffKind::GeometricPut, 1e-6), run_with(50, 3)).price, 0.0);
}

TEST(EiPricer, HighDimensionIsAllowed) {
    // No lattice is involved, so d well past the tree limit still runs.
    const BsParams params = BsParams::basket(40, 100.0, 0.05, 0.2, 0.2);
    const double price = price_gpr_ei_bs(params, Payoff(PayoffKind::GeometricPut, 100.0), run_with(100, 3)).price;
    EXPECT_TRUE(std::isfinite(price));
    EXPECT_GT(price, 0.0);
}

TEST(EiPricer, TwoAssetGeometricPutNearBenchmark) {
    const BsParams params = BsParams::basket(2, 100.0, 0.05, 0.2, 0.2);
    const double price = price_gpr_ei_bs(params, Payoff(PayoffKind::GeometricPut, 100.0), run_with(1000, 10)).price;
    EXPECT_NEAR(price, 4.57, 0.06);
    EXPECT_NEAR(price, geometric_put_benchmark(params, 100.0, 1.0), 0.10);
}
