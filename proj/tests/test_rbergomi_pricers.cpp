#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <numbers>

#include "gpra/rbergomi_pricers.hpp"

using namespace gpra;

namespace {

GprModel hand_model(KernelKind kind, const Matrix &train, const Vector &weights, double signal_std,
                    const Vector &scales, double mean) {
    GprModel m;
    m.kernel.kind = kind;
    m.kernel.signal_std = signal_std;
    m.kernel.length_scales = scales;
    m.train_x = train;
    m.weights = weights;
    m.mean = mean;
    m.center = train.colwise().mean().transpose();
    return m;
}

RbPriceConfig small_config(double strike, int p_count = 100, int n_steps = 6) {
    RbPriceConfig cfg;
    cfg.n_steps = n_steps;
    cfg.p_count = p_count;
    cfg.strike = strike;
    return cfg;
}

}  // namespace

TEST(HistoryWindow, WidthFollowsTruncation) {
    EXPECT_EQ(window_dim(1, 0), 2);
    EXPECT_EQ(window_dim(2, 3), 4);
    EXPECT_EQ(window_dim(10, 3), 8);
    EXPECT_EQ(window_dim(10, 0), 2);
}

TEST(HistoryWindow, ChronologicalLogPairs) {
    const RbParams params;
    const RbCovariance cov = rb_covariance(6, 1.0, params.hurst, params.rho);
    const RbPathSet paths = rb_simulate(params, cov, 4, 2);
    const Matrix x = history_window(paths, 5, 2);
    ASSERT_EQ(x.cols(), 6);
    for (int p = 0; p < 4; ++p) {
        for (int k = 0; k < 3; ++k) {
            EXPECT_EQ(x(p, 2 * k), std::log(paths.s(p, 3 + k)));
            EXPECT_EQ(x(p, 2 * k + 1), std::log(paths.v(p, 3 + k)));
        }
    }
    EXPECT_THROW(history_window(paths, 0, 1), OutOfRange);
    EXPECT_THROW(history_window(paths, 7, 1), OutOfRange);
}

TEST(PathStateView, MirrorsStoredPath) {
    const RbParams params;
    const RbCovariance cov = rb_covariance(4, 1.0, params.hurst, params.rho);
    const RbPathSet paths = rb_simulate(params, cov, 3, 8);
    const RbPathState st = path_state(params, paths, 2, 3);
    EXPECT_EQ(st.s, paths.s(2, 3));
    EXPECT_EQ(st.frozen_g.size(), 6);
    EXPECT_EQ(st.log_history(1, 1), std::log(paths.v(2, 2)));
    const RbPathState origin = path_state(params, paths, 0, 0);
    EXPECT_EQ(origin.s, params.s0);
    EXPECT_EQ(origin.v, params.xi0);
}

TEST(TerminalConvolution, MatchesOneDimensionalQuadrature) {
    Matrix train(5, 1);
    train << 4.4, 4.5, 4.6, 4.65, 4.8;
    Vector w(5);
    w << 1.2, -0.4, 0.9, 0.3, -1.1;
    const Vector ell = Vector::Constant(1, 0.08);
    const GprModel model = hand_model(KernelKind::SE, train, w, 2.0, ell, 3.0);
    const double dt = 0.02;
    const double rate = 0.05;
    for (const double s : {80.0, 100.0, 115.0}) {
        for (const double v : {0.01, 0.09, 0.3}) {
            const double mu = std::log(s) + (rate - 0.5 * v) * dt;
            const double sd = std::sqrt(v * dt);
            const int n = 20000;
            const double h = 20.0 * sd / n;
            Matrix nodes(n + 1, 1);
            for (int k = 0; k <= n; ++k) nodes(k, 0) = mu - 10.0 * sd + k * h;
            const Vector f = predict_batch(model, nodes);
            double sum = 0.0;
            for (int k = 0; k <= n; ++k) {
                const double x = (nodes(k, 0) - mu) / sd;
                sum += ((k == 0 || k == n) ? 0.5 : 1.0) * f[k] * std::exp(-0.5 * x * x);
            }
            const double expected = std::exp(-rate * dt) * sum * h / (sd * std::sqrt(2.0 * std::numbers::pi));
            EXPECT_NEAR(prop2_continuation(model, s, v, dt, rate), expected, 1e-8) << "s=" << s << " v=" << v;
        }
    }
    EXPECT_EQ(prop2_value(model, 10.0, 0.09, dt, rate, 100.0), 90.0);
}

TEST(ConditionalLaw, MatchesSchurComplementOfTheCovariance) {
    const RbParams params;
    const RbCovariance cov = rb_covariance(8, 1.0, params.hurst, params.rho);
    const RbPathSet paths = rb_simulate(params, cov, 2, 6);
    const Matrix &u = cov.upsilon.matrix();
    for (const int n : {0, 1, 4, 7}) {
        const double s = paths.s(1, n);
        const double v = paths.v(1, n);
        const Vector g = paths.g.row(1).head(2 * n).transpose();
        const NextPairLaw law = next_pair_law(params, cov, n, s, v, g);
        // Conditioning on the first 2n normals is conditioning on R_past.
        Matrix cond = u.block(2 * n, 2 * n, 2, 2);
        double mean_f = 0.0;
        if (n > 0) {
            const Vector r_past = cov.lambda.matrix().topLeftCorner(2 * n, 2 * n) * g;
            const Matrix upp = u.topLeftCorner(2 * n, 2 * n);
            const Matrix unp = u.block(2 * n, 0, 2, 2 * n);
            const Eigen::LDLT<Matrix> solver(upp);
            cond -= unp * solver.solve(unp.transpose());
            mean_f = (unp.row(1) * solver.solve(r_past))(0);
        }
        const double eta = params.eta;
        EXPECT_NEAR(law.var_s, v * cond(0, 0), 1e-10);
        EXPECT_NEAR(law.cov_sv, eta * std::sqrt(v) * cond(0, 1), 1e-9);
        EXPECT_NEAR(law.var_v, eta * eta * cond(1, 1), 1e-8);
        const double t = cov.time(n + 1);
        EXPECT_NEAR(law.mean_v, std::log(params.xi0) + eta * mean_f - 0.5 * eta * eta * std::pow(t, 2.0 * params.hurst),
                    1e-8);
        EXPECT_NEAR(law.mean_s, std::log(s) + (params.rate - 0.5 * v) * cov.dt, 1e-14);
    }
    EXPECT_THROW(next_pair_law(params, cov, 2, 100.0, 0.09, Vector::Zero(3)), DimensionMismatch);
    EXPECT_THROW(next_pair_law(params, cov, 8, 100.0, 0.09, Vector::Zero(16)), OutOfRange);
}

TEST(WindowConvolution, MatchesTwoDimensionalQuadrature) {
    Matrix train(4, 4);
    train << 4.60, -2.4, 4.62, -2.5, 4.55, -2.2, 4.58, -2.0, 4.70, -2.6, 4.66, -2.9, 4.50, -2.3, 4.52, -2.1;
    Vector w(4);
    w << 0.8, -0.5, 1.1, 0.4;
    Vector scales(4);
    scales << 0.15, 0.6, 0.09, 0.5;
    const GprModel model = hand_model(KernelKind::ARD, train, w, 1.4, scales, 2.0);
    NextPairLaw law;
    law.mean_s = 4.6;
    law.mean_v = -2.4;
    law.var_s = 0.09 * 0.02;
    law.cov_sv = -0.012;
    law.var_v = 0.1;
    Matrix lagged(1, 2);
    lagged << 4.59, -2.3;
    const double dt = 0.02;
    const double rate = 0.05;
    const double got = prop3_continuations(model, lagged, {law}, dt, rate)[0];

    // Trapezoid on a standard-normal grid mapped through the 2x2 Cholesky factor.
    const double a = std::sqrt(law.var_s);
    const double b = law.cov_sv / a;
    const double c = std::sqrt(law.var_v - b * b);
    const int n = 481;
    const double lim = 9.0;
    const double h = 2.0 * lim / (n - 1);
    Matrix pts(n * n, 4);
    Vector wts(n * n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            const double g1 = -lim + i * h;
            const double g2 = -lim + j * h;
            const int r = i * n + j;
            pts.row(r) << lagged(0, 0), lagged(0, 1), law.mean_s + a * g1, law.mean_v + b * g1 + c * g2;
            const double edge = ((i == 0 || i == n - 1) ? 0.5 : 1.0) * ((j == 0 || j == n - 1) ? 0.5 : 1.0);
            wts[r] = edge * std::exp(-0.5 * (g1 * g1 + g2 * g2)) * h * h / (2.0 * std::numbers::pi);
        }
    }
    const double expected = std::exp(-rate * dt) * predict_batch(model, pts).dot(wts);
    EXPECT_NEAR(got, expected, 1e-7);
}

TEST(WindowConvolution, RejectsWrongShapes) {
    const GprModel se = hand_model(KernelKind::SE, Matrix::Zero(2, 2), Vector::Ones(2), 1.0, Vector::Ones(1), 0.0);
    EXPECT_THROW(prop3_continuations(se, Matrix(1, 0), {NextPairLaw{}}, 0.1, 0.0), InvalidArgument);
    const GprModel ard = hand_model(KernelKind::ARD, Matrix::Zero(2, 4), Vector::Ones(2), 1.0, Vector::Ones(4), 0.0);
    EXPECT_THROW(prop3_continuations(ard, Matrix(1, 1), {NextPairLaw{}}, 0.1, 0.0), DimensionMismatch);
}

TEST(QuadrinomialTree, OneStepMomentsMatchConditionalLaw) {
    // The four-point variable matches Gaussian moments up to order seven, so
    // quadratic leaf functions integrate exactly.
    const RbParams params;
    const RbCovariance cov = rb_covariance(6, 1.0, params.hurst, params.rho);
    const RbPathSet paths = rb_simulate(params, cov, 2, 4);
    const RbPathState st = path_state(params, paths, 1, 3);
    const NextPairLaw law = next_pair_law(params, cov, 3, st.s, st.v, st.frozen_g);
    const double disc = std::exp(-params.rate * cov.dt);
    auto expect_of = [&](auto f) {
        return quadrinomial_continuation(params, cov, st, 1, 100.0, [&](const Matrix &leaves) {
                   EXPECT_EQ(leaves.rows(), 16);
                   EXPECT_EQ(leaves.cols(), 2);
                   Vector out(leaves.rows());
                   for (Eigen::Index i = 0; i < leaves.rows(); ++i) out[i] = f(leaves(i, 0), leaves(i, 1));
                   return out;
               }) /
               disc;
    };
    EXPECT_NEAR(expect_of([](double x, double) { return x; }), law.mean_s, 1e-12);
    EXPECT_NEAR(expect_of([](double, double y) { return y; }), law.mean_v, 1e-12);
    EXPECT_NEAR(expect_of([&](double x, double) { return std::pow(x - law.mean_s, 2); }), law.var_s, 1e-12);
    EXPECT_NEAR(expect_of([&](double, double y) { return std::pow(y - law.mean_v, 2); }), law.var_v, 1e-11);
    EXPECT_NEAR(expect_of([&](double x, double y) { return (x - law.mean_s) * (y - law.mean_v); }), law.cov_sv,
                1e-12);
}

TEST(QuadrinomialTree, LeafCountAndDepthLimit) {
    const RbParams params;
    const RbCovariance cov = rb_covariance(6, 1.0, params.hurst, params.rho);
    const RbPathSet paths = rb_simulate(params, cov, 1, 4);
    const RbPathState st = path_state(params, paths, 0, 2);
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    quadrinomial_continuation(params, cov, st, 2, 1e-9, [&](const Matrix &leaves) {
        rows = leaves.rows();
        cols = leaves.cols();
        return Vector(Vector::Ones(leaves.rows()));
    });
    EXPECT_EQ(rows, 256);
    EXPECT_EQ(cols, 4);
    auto one = [](const Matrix &leaves) { return Vector(Vector::Ones(leaves.rows())); };
    EXPECT_THROW(quadrinomial_continuation(params, cov, st, 4, 100.0, one), TreeTooDeep);
    EXPECT_THROW(quadrinomial_continuation(params, cov, path_state(params, paths, 0, 5), 2, 100.0, one), OutOfRange);

    RbPriceConfig cfg = small_config(100.0);
    cfg.n_steps = 8;
    cfg.tree_block = 4;
    EXPECT_THROW(price_rb_gpr_tree(params, cfg), TreeTooDeep);
}

TEST(RbPricers, DeepInTheMoneyStrikesExerciseAtOnce) {
    const RbParams params;
    for (const double strike : {130.0, 140.0}) {
        const double intrinsic = strike - params.s0;
        EXPECT_EQ(price_rb_gpr_ei(params, small_config(strike, 200, 10)).price, intrinsic);
        EXPECT_EQ(price_rb_gpr_tree(params, small_config(strike, 200, 10)).price, intrinsic);
    }
}

TEST(RbPricers, DeterministicForFixedSeed) {
    const RbParams params;
    RbPriceConfig cfg = small_config(100.0, 120);
    cfg.history = 1;
    const PriceReport a = price_rb_gpr_ei(params, cfg);
    const PriceReport b = price_rb_gpr_ei(params, cfg);
    EXPECT_EQ(a.price, b.price);
    EXPECT_EQ(price_rb_gpr_tree(params, cfg).price, price_rb_gpr_tree(params, cfg).price);
    cfg.seed = 2;
    EXPECT_NE(price_rb_gpr_ei(params, cfg).price, a.price);
}

TEST(RbPricers, PricesRespectStaticBounds) {
    const RbParams params;
    for (const double strike : {90.0, 100.0, 110.0}) {
        for (const int block : {1, 2, 3}) {
            RbPriceConfig cfg = small_config(strike, 150, 6);
            cfg.tree_block = block;
            const double tree = price_rb_gpr_tree(params, cfg).price;
            EXPECT_GE(tree, put_payoff(strike, params.s0));
            EXPECT_LT(tree, strike);
        }
        const double ei = price_rb_gpr_ei(params, small_config(strike, 150, 6)).price;
        EXPECT_GE(ei, put_payoff(strike, params.s0));
        EXPECT_LT(ei, strike);
    }
}

TEST(RbPricers, SingleStepUsesTerminalFormula) {
    const RbParams params;
    const PriceReport r = price_rb_gpr_ei(params, small_config(100.0, 100, 1));
    EXPECT_EQ(r.steps.size(), 1u);
    EXPECT_GT(r.price, 0.0);
}

TEST(RbPricers, InvalidConfigurationsRejected) {
    const RbParams params;
    RbPriceConfig cfg = small_config(100.0);
    cfg.tree_block = 4;
    cfg.n_steps = 6;
    EXPECT_THROW(price_rb_gpr_tree(params, cfg), TreeTooDeep);
    cfg.tree_block = 4;
    EXPECT_NO_THROW(cfg.validate(false));
    cfg.tree_block = 2;
    cfg.n_steps = 5;
    EXPECT_THROW(price_rb_gpr_tree(params, cfg), InvalidArgument);
    cfg.history = -1;
    EXPECT_THROW(price_rb_gpr_ei(params, cfg), InvalidArgument);
}

TEST(RbPricers, HundredStepsWithHistoryWhenLongTestsEnabled) {
    if (!std::getenv("GPRA_LONG")) GTEST_SKIP() << "set GPRA_LONG=1 to run";
    const RbParams params;
    RbPriceConfig cfg;
    cfg.n_steps = 100;
    cfg.p_count = 1000;
    cfg.history = 3;
    cfg.strike = 100.0;
    EXPECT_NEAR(price_rb_gpr_ei(params, cfg).price, 8.44, 0.10);
}
