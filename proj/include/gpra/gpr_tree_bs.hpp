#pragma once

// Bermudan basket pricing by backward induction on a fixed cloud of price
// points. The continuation at each point averages a GPR surrogate of the
// next-date value over the 2^d equally likely one-step lattice children.

#include <cmath>
#include <vector>

#include "gpra/bs_model.hpp"
#include "gpra/bs_run_config.hpp"
#include "gpra/gpr.hpp"
#include "gpra/parallel.hpp"
#include "gpra/report.hpp"
#include "gpra/sampling.hpp"

namespace gpra {

/// Per-coordinate affine map to zero mean and unit variance over the cloud.
struct Standardizer {
    Vector mean;
    Vector scale;

    static Standardizer of(const Matrix &points) {
        Standardizer s;
        s.mean = points.colwise().mean().transpose();
        const Matrix centered = points.rowwise() - s.mean.transpose();
        s.scale = (centered.colwise().squaredNorm() / static_cast<double>(points.rows())).cwiseSqrt().transpose();
        for (Eigen::Index i = 0; i < s.scale.size(); ++i) {
            if (!(s.scale[i] > 0.0)) s.scale[i] = 1.0;
        }
        return s;
    }

    [[nodiscard]] Matrix apply(const Matrix &rows) const {
        return (rows.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
    }
};

/// GPR surrogate of a value function of raw prices, fitted on standardized
/// coordinates.
struct TreeSurrogate {
    GprModel model;
    Standardizer scaling;

    [[nodiscard]] Vector predict(const Matrix &prices) const { return predict_batch(model, scaling.apply(prices)); }
};

inline TreeSurrogate fit_tree_surrogate(const StateCloud &cloud, const Standardizer &scaling, const Vector &values,
                                        const FitOptions &options) {
    return {fit(scaling.apply(cloud.points), values, KernelKind::SE, options), scaling};
}

namespace detail {

/// Mean of the surrogate over the lattice children of each row of `points`.
/// Small lattices are stacked across points so each kernel product is large;
/// large ones are streamed per point. Each point's sum runs in a fixed order.
inline Vector mean_over_children(const BsParams &params, const Matrix &points, const TreeSurrogate &surrogate,
                                 double dt) {
    const int d = params.dim();
    const Eigen::Index count = points.rows();
    Vector out(count);
    const double inv_children = std::ldexp(1.0, -d);
    if (d <= 10) {
        const Eigen::Index children = Eigen::Index{1} << d;
        const Eigen::Index per_group = std::max<Eigen::Index>(1, 1024 / children);
        const auto groups = static_cast<std::size_t>((count + per_group - 1) / per_group);
        parallel_for(groups, [&](std::size_t g) {
            const Eigen::Index first = static_cast<Eigen::Index>(g) * per_group;
            const Eigen::Index n = std::min(per_group, count - first);
            Matrix stacked(n * children, d);
            for (Eigen::Index i = 0; i < n; ++i) {
                for_each_ekvall_block(params, points.row(first + i).transpose(), dt,
                                      [&](const Matrix &block) { stacked.middleRows(i * children, children) = block; });
            }
            const Vector values = surrogate.predict(stacked);
            for (Eigen::Index i = 0; i < n; ++i) {
                out[first + i] = values.segment(i * children, children).sum() * inv_children;
            }
        });
        return out;
    }
    parallel_for(static_cast<std::size_t>(count), [&](std::size_t p) {
        const auto row = static_cast<Eigen::Index>(p);
        double sum = 0.0;
        for_each_ekvall_block(params, points.row(row).transpose(), dt,
                              [&](const Matrix &block) { sum += surrogate.predict(block).sum(); });
        out[row] = sum * inv_children;
    });
    return out;
}

}  // namespace detail

/// One backward step: max(exercise, e^{-rΔt} · mean of surrogate over the
/// lattice children) at every cloud point.
inline Vector gpr_tree_step(const BsParams &params, const StateCloud &cloud, const TreeSurrogate &surrogate, double dt,
                            const Payoff &payoff) {
    if (cloud.dim() != params.dim()) throw DimensionMismatch("cloud dimension vs model dimension");
    if (params.dim() > kMaxEkvallDim) {
        throw DimensionTooLarge("GPR-Tree supports d <= " + std::to_string(kMaxEkvallDim));
    }
    const Vector cont = std::exp(-params.rate() * dt) * detail::mean_over_children(params, cloud.points, surrogate, dt);
    return payoff_rows(payoff, cloud.points).cwiseMax(cont);
}

inline PriceReport price_gpr_tree_bs(const BsParams &params, const Payoff &payoff, const BsRunConfig &cfg) {
    cfg.validate();
    if (params.dim() > kMaxEkvallDim) {
        throw DimensionTooLarge("GPR-Tree supports d <= " + std::to_string(kMaxEkvallDim));
    }
    Stopwatch clock;
    PriceReport report;
    report.method = "gpr-tree";
    const double dt = cfg.maturity / cfg.n_steps;
    const StateCloud cloud = build_state_cloud(params, cfg.maturity, cfg.p_count, cfg.halton_skip);
    const Standardizer scaling = Standardizer::of(cloud.points);

    Vector values = payoff_rows(payoff, cloud.points);
    FitOptions opts = cfg.fit_options();
    for (int n = cfg.n_steps - 1; n >= 0; --n) {
        const TreeSurrogate surrogate = fit_tree_surrogate(cloud, scaling, values, opts);
        report.steps.push_back(StepDiagnostics::from(n + 1, surrogate.model));
        opts.warm_start = surrogate.model.kernel;
        opts.warm_noise_ratio = surrogate.model.noise_ratio;
        if (n == 0) {
            const Matrix spot = params.spot().transpose();
            const double cont =
                std::exp(-params.rate() * dt) * detail::mean_over_children(params, spot, surrogate, dt)[0];
            report.price = std::max(payoff_eval(payoff, params.spot()), cont);
            break;
        }
        values = gpr_tree_step(params, cloud, surrogate, dt, payoff);
    }
    report.seconds = clock.seconds();
    return report;
}

}  // namespace gpra
