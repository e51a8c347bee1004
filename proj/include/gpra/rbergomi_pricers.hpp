#pragma once

// American put pricing under rough Bergomi on simulated paths. The value at
// each regression date is a GPR surrogate of a window of recent log prices
// and log variances. Two continuation rules are provided: a short
// quadrinomial tree on the four-point Gaussian substitute, and the closed
// form Gaussian expectation of the surrogate.

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gpra/bs_run_config.hpp"
#include "gpra/errors.hpp"
#include "gpra/gpr.hpp"
#include "gpra/linalg.hpp"
#include "gpra/parallel.hpp"
#include "gpra/rbergomi.hpp"
#include "gpra/report.hpp"

namespace gpra {

inline constexpr int kMaxQuadrinomialSteps = 3;

struct RbPriceConfig {
    double maturity = 1.0;
    int n_steps = 50;
    int tree_block = 2;  ///< m, tree steps between regression dates
    int p_count = 1000;
    int history = 0;     ///< J, lagged dates kept besides the current one
    std::uint64_t seed = 1;
    double strike = 100.0;
    int fit_restarts = 5;
    double noise_floor = kSurrogateNoiseFloor;
    bool estimate_noise = true;

    void validate(bool needs_tree) const {
        if (!(maturity > 0.0)) throw InvalidArgument("maturity must be positive");
        if (n_steps < 1) throw InvalidArgument("need at least one time step");
        if (p_count < 2) throw InvalidArgument("need at least two paths");
        if (history < 0) throw InvalidArgument("history depth must be non-negative");
        if (!(strike > 0.0)) throw InvalidArgument("strike must be positive");
        if (needs_tree) {
            if (tree_block < 1) throw InvalidArgument("tree block must be positive");
            if (tree_block > kMaxQuadrinomialSteps) {
                throw TreeTooDeep("quadrinomial tree supports m <= " + std::to_string(kMaxQuadrinomialSteps));
            }
            if (n_steps % tree_block != 0) throw InvalidArgument("tree block must divide the number of steps");
        }
    }

    [[nodiscard]] FitOptions fit_options() const {
        FitOptions opts;
        opts.restarts = fit_restarts;
        opts.jitter = noise_floor;
        opts.estimate_noise = estimate_noise;
        return opts;
    }
};

inline double put_payoff(double strike, double s) { return std::max(strike - s, 0.0); }

/// Predictor width at date n: two coordinates for each of the last
/// min(n, J+1) dates.
inline int window_dim(int n, int history) { return 2 * std::min(n, history + 1); }

/// Predictors at date n: (log S, log V) for dates max(1, n-J) .. n in
/// chronological order, so the two newest coordinates come last.
inline Matrix history_window(const RbPathSet &paths, int n, int history) {
    if (n < 1 || n > paths.n_steps()) throw OutOfRange("history window date out of range");
    const int dates = std::min(n, history + 1);
    Matrix x(paths.size(), 2 * dates);
    for (int k = 0; k < dates; ++k) {
        const int date = n - dates + 1 + k;
        x.col(2 * k) = paths.s.col(date).array().log().matrix();
        x.col(2 * k + 1) = paths.v.col(date).array().log().matrix();
    }
    return x;
}

// ---------------------------------------------------------------------------
// Quadrinomial tree

/// State of one path at date k: current price and variance, the normals
/// already drawn (2k of them) and the observed log history of dates 1..k.
struct RbPathState {
    int k = 0;
    double s = 0.0;
    double v = 0.0;
    Vector frozen_g;
    Matrix log_history;  ///< k x 2, columns (log S, log V)
};

inline RbPathState path_state(const RbParams &params, const RbPathSet &paths, int p, int k) {
    RbPathState st;
    st.k = k;
    st.s = k == 0 ? params.s0 : paths.s(p, k);
    st.v = k == 0 ? params.xi0 : paths.v(p, k);
    st.frozen_g = paths.g.row(p).head(2 * k).transpose();
    st.log_history.resize(k, 2);
    for (int date = 1; date <= k; ++date) {
        st.log_history(date - 1, 0) = std::log(paths.s(p, date));
        st.log_history(date - 1, 1) = std::log(paths.v(p, date));
    }
    return st;
}

/// Discounted expectation over an m-step non-recombining tree in which each
/// future normal takes the four-point values. The two normals of a step
/// branch 16 ways. `terminal(leaf_log_paths)` receives one row per leaf with
/// the synthetic (log S, log V) of dates k+1..k+m and returns leaf values.
/// Interior nodes take the max with the put exercise value; the root does
/// not (the caller applies exercise at date k).
template <class Terminal>
double quadrinomial_continuation(const RbParams &params, const RbCovariance &cov, const RbPathState &state, int m,
                                 double strike, Terminal &&terminal) {
    if (m < 1) throw InvalidArgument("tree needs at least one step");
    if (m > kMaxQuadrinomialSteps) {
        throw TreeTooDeep("quadrinomial tree supports m <= " + std::to_string(kMaxQuadrinomialSteps) + ", got " +
                          std::to_string(m));
    }
    const int k = state.k;
    if (k + m > cov.n_steps) throw OutOfRange("tree extends past maturity");
    if (state.frozen_g.size() != 2 * k) throw DimensionMismatch("frozen normals must have length 2k");
    const AlfonsiVar a = alfonsi_nodes();
    const Matrix &lam = cov.lambda.matrix();
    const double dt = cov.dt;
    const double eta2 = params.eta * params.eta;

    // Contribution of the frozen past to each future fBm value.
    Vector past(m);
    for (int j = 0; j < m; ++j) {
        const int row = 2 * (k + j) + 1;
        past[j] = 2 * k > 0 ? lam.row(row).head(2 * k).dot(state.frozen_g) : 0.0;
    }

    // Breadth-first construction; node i at depth j+1 has parent i / 16 and
    // branch i % 16 = 4 * (index of the price normal) + (index of the fBm normal).
    std::vector<Matrix> log_paths(static_cast<std::size_t>(m + 1));  // leaves x 2j
    std::vector<Vector> log_s(static_cast<std::size_t>(m + 1));
    std::vector<Vector> var(static_cast<std::size_t>(m + 1));
    std::vector<Matrix> tree_g(static_cast<std::size_t>(m + 1));
    log_s[0] = Vector::Constant(1, std::log(state.s));
    var[0] = Vector::Constant(1, state.v);
    tree_g[0] = Matrix(1, 0);
    log_paths[0] = Matrix(1, 0);
    for (int j = 0; j < m; ++j) {
        const auto parents = log_s[static_cast<std::size_t>(j)].size();
        const Eigen::Index nodes = parents * 16;
        const int row_w = 2 * (k + j);
        const int row_f = row_w + 1;
        const double t_next = cov.time(k + j + 1);
        const double v_drift = std::log(params.xi0) - 0.5 * eta2 * std::pow(t_next, 2.0 * params.hurst);
        Vector ls(nodes), vv(nodes);
        Matrix tg(nodes, 2 * (j + 1));
        Matrix lp(nodes, 2 * (j + 1));
        const auto ju = static_cast<std::size_t>(j);
        for (Eigen::Index parent = 0; parent < parents; ++parent) {
            // Tree normals already placed at earlier steps of this block.
            const double prior_w = lam.row(row_w).segment(2 * k, 2 * j).dot(tree_g[ju].row(parent));
            const double prior_f = lam.row(row_f).segment(2 * k, 2 * j).dot(tree_g[ju].row(parent));
            const double s_parent = log_s[ju][parent];
            const double v_parent = var[ju][parent];
            for (int bi = 0; bi < 4; ++bi) {
                for (int bj = 0; bj < 4; ++bj) {
                    const Eigen::Index node = parent * 16 + bi * 4 + bj;
                    const double g1 = a.support[static_cast<std::size_t>(bi)];
                    const double g2 = a.support[static_cast<std::size_t>(bj)];
                    const double dw = prior_w + lam(row_w, row_w) * g1;
                    const double wf = past[j] + prior_f + lam(row_f, row_w) * g1 + lam(row_f, row_f) * g2;
                    ls[node] = s_parent + (params.rate - 0.5 * v_parent) * dt + std::sqrt(v_parent) * dw;
                    const double log_v = v_drift + params.eta * wf;
                    vv[node] = std::exp(log_v);
                    tg.row(node).head(2 * j) = tree_g[ju].row(parent);
                    tg(node, 2 * j) = g1;
                    tg(node, 2 * j + 1) = g2;
                    lp.row(node).head(2 * j) = log_paths[ju].row(parent);
                    lp(node, 2 * j) = ls[node];
                    lp(node, 2 * j + 1) = log_v;
                }
            }
        }
        log_s[ju + 1] = std::move(ls);
        var[ju + 1] = std::move(vv);
        tree_g[ju + 1] = std::move(tg);
        log_paths[ju + 1] = std::move(lp);
    }

    Vector values = terminal(static_cast<const Matrix &>(log_paths[static_cast<std::size_t>(m)]));
    if (values.size() != log_s[static_cast<std::size_t>(m)].size()) {
        throw DimensionMismatch("terminal values must have one entry per leaf");
    }
    std::array<double, 16> weight{};
    for (int bi = 0; bi < 4; ++bi)
        for (int bj = 0; bj < 4; ++bj)
            weight[static_cast<std::size_t>(bi * 4 + bj)] =
                a.probs[static_cast<std::size_t>(bi)] * a.probs[static_cast<std::size_t>(bj)];
    const double disc = std::exp(-params.rate * dt);
    for (int j = m - 1; j >= 0; --j) {
        const auto ju = static_cast<std::size_t>(j);
        const Eigen::Index parents = log_s[ju].size();
        Vector up(parents);
        for (Eigen::Index parent = 0; parent < parents; ++parent) {
            double sum = 0.0;
            for (std::size_t b = 0; b < 16; ++b) sum += weight[b] * values[parent * 16 + static_cast<Eigen::Index>(b)];
            const double cont = disc * sum;
            up[parent] = j == 0 ? cont : std::max(put_payoff(strike, std::exp(log_s[ju][parent])), cont);
        }
        values = std::move(up);
    }
    return values[0];
}

namespace detail {

/// Window predictors at date k+m for each tree leaf: observed history for
/// dates up to k, synthetic leaf values after.
inline Matrix leaf_windows(const RbPathState &state, const Matrix &leaf_log_paths, int m, int history) {
    const int date = state.k + m;
    const int dates = std::min(date, history + 1);
    Matrix x(leaf_log_paths.rows(), 2 * dates);
    for (int c = 0; c < dates; ++c) {
        const int d = date - dates + 1 + c;
        if (d <= state.k) {
            x.col(2 * c).setConstant(state.log_history(d - 1, 0));
            x.col(2 * c + 1).setConstant(state.log_history(d - 1, 1));
        } else {
            x.col(2 * c) = leaf_log_paths.col(2 * (d - state.k - 1));
            x.col(2 * c + 1) = leaf_log_paths.col(2 * (d - state.k - 1) + 1);
        }
    }
    return x;
}

}  // namespace detail

inline PriceReport price_rb_gpr_tree(const RbParams &params, const RbPriceConfig &cfg) {
    params.validate();
    cfg.validate(true);
    Stopwatch clock;
    PriceReport report;
    report.method = "gpr-tree";
    const int n = cfg.n_steps;
    const int m = cfg.tree_block;
    const RbCovariance cov = rb_covariance(n, cfg.maturity, params.hurst, params.rho);
    const RbPathSet paths = rb_simulate(params, cov, cfg.p_count, cfg.seed);
    const double strike = cfg.strike;

    std::optional<GprModel> surrogate;
    FitOptions opts = cfg.fit_options();
    auto leaf_values = [&](const RbPathState &st, const Matrix &leaves) -> Vector {
        if (!surrogate) {
            Vector out(leaves.rows());
            for (Eigen::Index i = 0; i < leaves.rows(); ++i) {
                out[i] = put_payoff(strike, std::exp(leaves(i, 2 * m - 2)));
            }
            return out;
        }
        return predict_batch(*surrogate, detail::leaf_windows(st, leaves, m, cfg.history));
    };

    for (int k = n - m; k >= 0; k -= m) {
        if (k == 0) {
            RbPathState root;
            root.s = params.s0;
            root.v = params.xi0;
            root.log_history.resize(0, 2);
            const double cont = quadrinomial_continuation(
                params, cov, root, m, strike, [&](const Matrix &leaves) { return leaf_values(root, leaves); });
            report.price = std::max(put_payoff(strike, params.s0), cont);
            break;
        }
        Vector values(cfg.p_count);
        parallel_for(static_cast<std::size_t>(cfg.p_count), [&](std::size_t idx) {
            const int p = static_cast<int>(idx);
            const RbPathState st = path_state(params, paths, p, k);
            const double cont = quadrinomial_continuation(params, cov, st, m, strike,
                                                          [&](const Matrix &leaves) { return leaf_values(st, leaves); });
            values[p] = std::max(put_payoff(strike, st.s), cont);
        });
        surrogate = fit(history_window(paths, k, cfg.history), values, KernelKind::ARD, opts);
        report.steps.push_back(StepDiagnostics::from(k, *surrogate));
        opts.warm_start = surrogate->kernel;
        opts.warm_noise_ratio = surrogate->noise_ratio;
    }
    report.seconds = clock.seconds();
    return report;
}

// ---------------------------------------------------------------------------
// Closed-form continuation

/// Discounted expectation of a 1-D SE surrogate of log S_T when
/// log S_T ~ N(log S + (r - V/2)Δt, VΔt).
inline double prop2_continuation(const GprModel &surrogate, double s, double v, double dt, double rate) {
    if (surrogate.kernel.kind != KernelKind::SE || surrogate.dim() != 1) {
        throw InvalidArgument("terminal-step surrogate must be a 1-D SE model");
    }
    const double disc = std::exp(-rate * dt);
    const double mu = std::log(s) + (rate - 0.5 * v) * dt;
    const double ell2 = surrogate.kernel.length_scales[0] * surrogate.kernel.length_scales[0];
    const double total = v * dt + ell2;
    const double sf2 = surrogate.kernel.signal_std * surrogate.kernel.signal_std;
    double sum = 0.0;
    for (Eigen::Index q = 0; q < surrogate.size(); ++q) {
        const double diff = surrogate.train_x(q, 0) - mu;
        sum += surrogate.weights[q] * std::exp(-0.5 * diff * diff / total);
    }
    return disc * (surrogate.mean + sf2 * std::sqrt(ell2 / total) * sum);
}

/// Exercise-or-continue value one step before maturity.
inline double prop2_value(const GprModel &surrogate, double s, double v, double dt, double rate, double strike) {
    return std::max(put_payoff(strike, s), prop2_continuation(surrogate, s, v, dt, rate));
}

/// Conditional law of the newest predictor pair (log S_{n+1}, log V_{n+1})
/// given the state at date n: mean and the entries of the 2x2 covariance.
struct NextPairLaw {
    double mean_s = 0.0;
    double mean_v = 0.0;
    double var_s = 0.0;
    double cov_sv = 0.0;
    double var_v = 0.0;
};

inline NextPairLaw next_pair_law(const RbParams &params, const RbCovariance &cov, int n, double s, double v,
                                 const Vector &frozen_g) {
    if (frozen_g.size() != 2 * n) throw DimensionMismatch("frozen normals must have length 2n");
    if (n + 1 > cov.n_steps) throw OutOfRange("no step after maturity");
    const Matrix &lam = cov.lambda.matrix();
    const int row_w = 2 * n;
    const int row_f = 2 * n + 1;
    const double dt = cov.dt;
    NextPairLaw law;
    law.mean_s = std::log(s) + (params.rate - 0.5 * v) * dt;
    const double past = n > 0 ? lam.row(row_f).head(2 * n).dot(frozen_g) : 0.0;
    law.mean_v = std::log(params.xi0) + params.eta * past -
                 0.5 * params.eta * params.eta * std::pow(cov.time(n + 1), 2.0 * params.hurst);
    // The price increment's own normal scaled by its factor entry is √Δt.
    law.var_s = v * dt;
    law.cov_sv = params.eta * std::sqrt(v * dt) * lam(row_f, row_w);
    law.var_v = params.eta * params.eta * (lam(row_f, row_w) * lam(row_f, row_w) + lam(row_f, row_f) * lam(row_f, row_f));
    return law;
}

/// Discounted expectation of an ARD surrogate over the window at date n+1
/// for each target: `lagged` holds the targets' d-2 known coordinates (the
/// window at n+1 without its newest pair), `laws` the conditional law of
/// the newest pair.
inline Vector prop3_continuations(const GprModel &surrogate, const Matrix &lagged, const std::vector<NextPairLaw> &laws,
                                  double dt, double rate) {
    const Eigen::Index d = surrogate.dim();
    if (surrogate.kernel.kind != KernelKind::ARD || d < 2 || d % 2 != 0) {
        throw InvalidArgument("window surrogate must be ARD over an even number of predictors");
    }
    if (lagged.cols() != d - 2 || lagged.rows() != static_cast<Eigen::Index>(laws.size())) {
        throw DimensionMismatch("lagged predictors vs surrogate dimension");
    }
    const Vector scales = surrogate.scales();
    const double l1 = scales[d - 2];
    const double l2 = scales[d - 1];
    const double sf2 = surrogate.kernel.signal_std * surrogate.kernel.signal_std;
    const double disc = std::exp(-rate * dt);
    const Eigen::Index targets = lagged.rows();
    const Eigen::Index train = surrogate.size();
    const Vector zs = surrogate.train_x.col(d - 2);
    const Vector zv = surrogate.train_x.col(d - 1);
    Vector out(targets);

    Matrix lag_quad;  // squared scaled distances over the lagged coordinates
    if (d > 2) {
        const Vector inv = scales.head(d - 2).cwiseInverse();
        const Vector c = surrogate.center.head(d - 2);
        const Matrix a = (lagged.rowwise() - c.transpose()).array().rowwise() * inv.transpose().array();
        const Matrix b =
            (surrogate.train_x.leftCols(d - 2).rowwise() - c.transpose()).array().rowwise() * inv.transpose().array();
        lag_quad = -2.0 * a * b.transpose();
        lag_quad.colwise() += a.rowwise().squaredNorm();
        lag_quad.rowwise() += b.rowwise().squaredNorm().transpose();
        lag_quad = lag_quad.cwiseMax(0.0);
    }
    parallel_for(static_cast<std::size_t>(targets), [&](std::size_t idx) {
        const auto p = static_cast<Eigen::Index>(idx);
        const NextPairLaw &law = laws[idx];
        const double m11 = law.var_s + l1 * l1;
        const double m12 = law.cov_sv;
        const double m22 = law.var_v + l2 * l2;
        const double det = m11 * m22 - m12 * m12;
        if (!(det > 0.0)) throw NotPositiveDefinite("2x2 convolution matrix");
        const double i11 = m22 / det;
        const double i12 = -m12 / det;
        const double i22 = m11 / det;
        double sum = 0.0;
        for (Eigen::Index q = 0; q < train; ++q) {
            const double ds = zs[q] - law.mean_s;
            const double dv = zv[q] - law.mean_v;
            double e = i11 * ds * ds + 2.0 * i12 * ds * dv + i22 * dv * dv;
            if (d > 2) e += lag_quad(p, q);
            sum += surrogate.weights[q] * std::exp(-0.5 * e);
        }
        out[p] = disc * (surrogate.mean + sf2 * l1 * l2 * sum / std::sqrt(det));
    });
    return out;
}

/// Exercise-or-continue value of path p at date n against a surrogate of
/// the window at date n+1.
inline double prop3_value(const RbParams &params, const RbCovariance &cov, const RbPathSet &paths, int p, int n,
                          const GprModel &surrogate, int history, double strike) {
    const RbPathState st = path_state(params, paths, p, n);
    const NextPairLaw law = next_pair_law(params, cov, n, st.s, st.v, st.frozen_g);
    const int lag_dates = window_dim(n + 1, history) / 2 - 1;
    Matrix lagged(1, 2 * lag_dates);
    for (int c = 0; c < lag_dates; ++c) {
        lagged(0, 2 * c) = st.log_history(n - lag_dates + c, 0);
        lagged(0, 2 * c + 1) = st.log_history(n - lag_dates + c, 1);
    }
    const double cont = prop3_continuations(surrogate, lagged, {law}, cov.dt, params.rate)[0];
    return std::max(put_payoff(strike, st.s), cont);
}

inline PriceReport price_rb_gpr_ei(const RbParams &params, const RbPriceConfig &cfg) {
    params.validate();
    cfg.validate(false);
    Stopwatch clock;
    PriceReport report;
    report.method = "gpr-ei";
    const int n_steps = cfg.n_steps;
    const double strike = cfg.strike;
    const RbCovariance cov = rb_covariance(n_steps, cfg.maturity, params.hurst, params.rho);
    const RbPathSet paths = rb_simulate(params, cov, cfg.p_count, cfg.seed);
    const double dt = cov.dt;
    const int count = cfg.p_count;

    // One step before maturity: 1-D surrogate of the payoff in log S_T.
    Vector terminal(count);
    for (int p = 0; p < count; ++p) terminal[p] = put_payoff(strike, paths.s(p, n_steps));
    const GprModel last = fit(paths.s.col(n_steps).array().log().matrix(), terminal, KernelKind::SE, cfg.fit_options());
    report.steps.push_back(StepDiagnostics::from(n_steps, last));
    if (n_steps == 1) {
        report.price = prop2_value(last, params.s0, params.xi0, dt, params.rate, strike);
        report.seconds = clock.seconds();
        return report;
    }
    Vector values(count);
    for (int p = 0; p < count; ++p) {
        values[p] = prop2_value(last, paths.s(p, n_steps - 1), paths.v(p, n_steps - 1), dt, params.rate, strike);
    }

    FitOptions opts = cfg.fit_options();
    for (int n = n_steps - 2; n >= 0; --n) {
        const GprModel model = fit(history_window(paths, n + 1, cfg.history), values, KernelKind::ARD, opts);
        report.steps.push_back(StepDiagnostics::from(n + 1, model));
        opts.warm_start = model.kernel;
        opts.warm_noise_ratio = model.noise_ratio;
        if (n == 0) {
            const NextPairLaw law = next_pair_law(params, cov, 0, params.s0, params.xi0, Vector());
            const double cont = prop3_continuations(model, Matrix(1, 0), {law}, dt, params.rate)[0];
            report.price = std::max(put_payoff(strike, params.s0), cont);
            break;
        }
        std::vector<NextPairLaw> laws(static_cast<std::size_t>(count));
        for (int p = 0; p < count; ++p) {
            laws[static_cast<std::size_t>(p)] =
                next_pair_law(params, cov, n, paths.s(p, n), paths.v(p, n), paths.g.row(p).head(2 * n).transpose());
        }
        const int lag_cols = window_dim(n + 1, cfg.history) - 2;
        const Matrix lagged = history_window(paths, n, cfg.history).rightCols(lag_cols);
        const Vector cont = prop3_continuations(model, lagged, laws, dt, params.rate);
        for (int p = 0; p < count; ++p) values[p] = std::max(put_payoff(strike, paths.s(p, n)), cont[p]);
    }
    report.seconds = clock.seconds();
    return report;
}

}  // namespace gpra
