#pragma once

// Bermudan basket pricing where the continuation value is the exact Gaussian
// convolution of an SE-kernel surrogate in drift-removed log coordinates.
//
// The process Z_t = log S_t - (r - σ²/2) t is driftless with i.i.d. Gaussian
// increments of covariance Π = (ρᵢⱼσᵢσⱼΔt). A single grid built from the
// terminal cloud therefore serves every exercise date: only the mapping back
// to prices, exp(z + (r - σ²/2) t), depends on t.

#include <cmath>
#include <optional>

#include "gpra/bs_model.hpp"
#include "gpra/bs_run_config.hpp"
#include "gpra/gpr.hpp"
#include "gpra/linalg.hpp"
#include "gpra/report.hpp"
#include "gpra/sampling.hpp"

namespace gpra {

struct ZGrid {
    Matrix z_points;  ///< P x d, time invariant
    SymMatrix pi;     ///< log-increment covariance over one exercise interval
};

inline ZGrid make_zgrid(const BsParams &params, const StateCloud &cloud, double maturity, double dt) {
    ZGrid grid;
    grid.z_points = cloud.log_points.rowwise() - (params.log_drift() * maturity).transpose();
    grid.pi = params.log_increment_cov(dt);
    return grid;
}

/// Price point exp(z + (r - σ²/2) t) at which the payoff is evaluated.
inline Vector exercise_price_at(const Vector &z, double t, const BsParams &params) {
    if (z.size() != params.dim()) throw DimensionMismatch("exercise_price_at: z dimension");
    return (z + params.log_drift() * t).array().exp().matrix();
}

/// e^{-rΔt} E[f(z + ΔZ)] with ΔZ ~ N(0, Π) for each target row, where f is an
/// SE-kernel surrogate. Each term integrates in closed form:
///   σ_f² σ_l^d exp(-½ Δᵀ M⁻¹ Δ) / √det M,   M = Π + σ_l² I,
/// and the centering constant integrates to itself.
inline Vector ei_continuation_at(const GprModel &surrogate, const SymMatrix &pi, const Matrix &targets, double dt,
                                 double rate) {
    if (surrogate.kernel.kind != KernelKind::SE) throw InvalidArgument("closed-form continuation needs an SE kernel");
    const Eigen::Index d = surrogate.dim();
    if (pi.n() != d || targets.cols() != d) throw DimensionMismatch("ei_continuation: dimensions");
    const double disc = std::exp(-rate * dt);
    Vector out = Vector::Constant(targets.rows(), disc * surrogate.mean);
    if (surrogate.weights.cwiseAbs().maxCoeff() == 0.0) return out;

    const double ell = surrogate.kernel.length_scales[0];
    Matrix m = pi.matrix();
    m.diagonal().array() += ell * ell;
    const LowerTriangular l = cholesky_lower(SymMatrix(m));
    const double log_factor = 2.0 * std::log(surrogate.kernel.signal_std) + static_cast<double>(d) * std::log(ell) -
                              0.5 * log_det_from_cholesky(l);
    const auto lower = l.matrix().triangularView<Eigen::Lower>();
    // Whitened coordinates: Δᵀ M⁻¹ Δ = |L⁻¹ z_q - L⁻¹ z_p|².
    const Matrix wq = lower.solve((surrogate.train_x.rowwise() - surrogate.center.transpose()).transpose());
    const Matrix wp = lower.solve((targets.rowwise() - surrogate.center.transpose()).transpose());
    const Vector nq = wq.colwise().squaredNorm().transpose();
    const Vector np = wp.colwise().squaredNorm().transpose();
    const Eigen::Index chunk = 512;
    for (Eigen::Index start = 0; start < targets.rows(); start += chunk) {
        const Eigen::Index rows = std::min(chunk, targets.rows() - start);
        Matrix quad = -2.0 * wp.middleCols(start, rows).transpose() * wq;
        quad.colwise() += np.segment(start, rows);
        quad.rowwise() += nq.transpose();
        const Vector sums = (-0.5 * quad.array().max(0.0)).exp().matrix() * surrogate.weights;
        out.segment(start, rows).array() += disc * std::exp(log_factor) * sums.array();
    }
    return out;
}

inline Vector ei_continuation(const ZGrid &grid, const GprModel &surrogate, double dt, double rate) {
    return ei_continuation_at(surrogate, grid.pi, grid.z_points, dt, rate);
}

inline PriceReport price_gpr_ei_bs(const BsParams &params, const Payoff &payoff, const BsRunConfig &cfg) {
    cfg.validate();
    Stopwatch clock;
    PriceReport report;
    report.method = "gpr-ei";
    const double dt = cfg.maturity / cfg.n_steps;
    const StateCloud cloud = build_state_cloud(params, cfg.maturity, cfg.p_count, cfg.halton_skip);
    const ZGrid grid = make_zgrid(params, cloud, cfg.maturity, dt);
    const Vector drift = params.log_drift();

    Vector u = payoff_rows(payoff, cloud.points);
    FitOptions opts = cfg.fit_options();
    for (int n = cfg.n_steps - 1; n >= 0; --n) {
        const GprModel model = fit(grid.z_points, u, KernelKind::SE, opts);
        report.steps.push_back(StepDiagnostics::from(n + 1, model));
        opts.warm_start = model.kernel;
        opts.warm_noise_ratio = model.noise_ratio;
        if (n == 0) {
            const Matrix spot_z = params.spot().array().log().matrix().transpose();
            const double cont = ei_continuation_at(model, grid.pi, spot_z, dt, params.rate())[0];
            report.price = std::max(payoff_eval(payoff, params.spot()), cont);
            break;
        }
        const Vector cont = ei_continuation(grid, model, dt, params.rate());
        const double t = n * dt;
        const Matrix prices = ((grid.z_points.rowwise() + (drift * t).transpose()).array().exp()).matrix();
        const Vector exercise = payoff_rows(payoff, prices);
        u = exercise.cwiseMax(cont);
    }
    report.seconds = clock.seconds();
    return report;
}

}  // namespace gpra
