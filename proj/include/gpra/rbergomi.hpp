#pragma once

// Rough Bergomi model: joint covariance of the Brownian increments and the
// Riemann-Liouville fBm on the time grid, its Cholesky factor, Euler paths,
// and the four-point variable that matches seven Gaussian moments.

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gpra/errors.hpp"
#include "gpra/linalg.hpp"
#include "gpra/parallel.hpp"
#include "gpra/sampling.hpp"

namespace gpra {

struct RbParams {
    double s0 = 100.0;
    double rate = 0.05;
    double xi0 = 0.09;  ///< flat forward variance
    double eta = 1.9;
    double hurst = 0.07;
    double rho = -0.9;

    void validate() const {
        if (!(s0 > 0.0) || !std::isfinite(s0)) throw InvalidArgument("spot must be positive");
        if (!std::isfinite(rate)) throw InvalidArgument("rate must be finite");
        if (!(xi0 > 0.0) || !std::isfinite(xi0)) throw InvalidArgument("forward variance must be positive");
        if (!(eta > 0.0) || !std::isfinite(eta)) throw InvalidArgument("vol-of-vol must be positive");
        if (!(hurst > 0.0 && hurst < 1.0)) throw InvalidArgument("Hurst index must lie in (0, 1)");
        if (!(std::abs(rho) <= 1.0)) throw InvalidArgument("correlation must lie in [-1, 1]");
    }
};

/// Covariance of R = (ΔW_1, W̃_{t_1}, ..., ΔW_N, W̃_{t_N}) and its lower
/// Cholesky factor. Index 2k holds ΔW_{k+1}, index 2k+1 holds W̃_{t_{k+1}}.
struct RbCovariance {
    int n_steps = 0;
    double dt = 0.0;
    double hurst = 0.5;
    SymMatrix upsilon;
    LowerTriangular lambda;

    [[nodiscard]] double time(int n) const { return n * dt; }
};

inline constexpr int kFbmQuadratureNodes = kSingularQuadratureNodes;

namespace detail {

/// Cov(W̃_a, W̃_b) for 0 < a < b:
///   2H a^{2H} ∫₀¹ (1-s)^{H-½} (b/a - s)^{H-½} ds.
inline double fbm_cross_covariance(double a, double b, double hurst, const GaussLegendreRule &rule) {
    const double e = hurst - 0.5;
    const double gap = b / a - 1.0;
    double integral;
    if (e >= 0.0) {
        integral = 0.0;
        for (std::size_t k = 0; k < rule.size(); ++k) {
            const double s = rule.nodes[k];
            integral += rule.weights[k] * std::pow(1.0 - s, e) * std::pow(gap + 1.0 - s, e);
        }
    } else {
        integral = singular_gauss_legendre_with(
            [&](double, double one_minus_s) {
                return std::pow(one_minus_s, e) * std::pow(gap + one_minus_s, e);
            },
            hurst + 0.5, rule);
    }
    return 2.0 * hurst * std::pow(a, 2.0 * hurst) * integral;
}

}  // namespace detail

inline RbCovariance rb_covariance(int n_steps, double maturity, double hurst, double rho) {
    if (n_steps < 1) throw InvalidArgument("need at least one time step");
    if (!(maturity > 0.0)) throw InvalidArgument("maturity must be positive");
    if (!(hurst > 0.0 && hurst < 1.0)) throw InvalidExponent("Hurst index must lie in (0, 1)");
    if (!(std::abs(rho) <= 1.0)) throw InvalidArgument("correlation must lie in [-1, 1]");
    RbCovariance cov;
    cov.n_steps = n_steps;
    cov.dt = maturity / n_steps;
    cov.hurst = hurst;
    const int size = 2 * n_steps;
    const double h = hurst + 0.5;
    const double c = 2.0 * rho * std::sqrt(2.0 * hurst) / (2.0 * hurst + 1.0);
    const GaussLegendreRule rule(kFbmQuadratureNodes);
    // Tabulated so that t(n) - t(m) is exactly zero for m == n even under
    // contracted multiply-adds.
    std::vector<double> grid(static_cast<std::size_t>(n_steps) + 1);
    for (int n = 0; n <= n_steps; ++n) grid[static_cast<std::size_t>(n)] = n * cov.dt;
    auto t = [&](int n) { return grid[static_cast<std::size_t>(n)]; };

    Matrix u = Matrix::Zero(size, size);
    for (int n = 1; n <= n_steps; ++n) {
        const int wn = 2 * (n - 1);
        const int fn = wn + 1;
        u(wn, wn) = cov.dt;
        u(fn, fn) = std::pow(t(n), 2.0 * hurst);
        for (int m = 1; m <= n_steps; ++m) {
            const int wm = 2 * (m - 1);
            // The increment over (t_{m-1}, t_m] against the fBm at t_n.
            if (m <= n) {
                const double v = c * (std::pow(t(n) - t(m - 1), h) - std::pow(t(n) - t(m), h));
                u(wm, fn) = v;
                u(fn, wm) = v;
            }
            if (m < n) {
                const double v = detail::fbm_cross_covariance(t(m), t(n), hurst, rule);
                u(wm + 1, fn) = v;
                u(fn, wm + 1) = v;
            }
        }
    }
    cov.upsilon = SymMatrix(u);

    // Escalate a relative diagonal shift if roundoff breaks definiteness.
    Matrix work = cov.upsilon.matrix();
    double shift = 0.0;
    const double scale = work.diagonal().maxCoeff();
    for (int attempt = 0; attempt <= 4; ++attempt) {
        Matrix a = work;
        a.diagonal().array() += shift;
        if (detail::cholesky_in_place(a, 0.0)) {
            cov.lambda = LowerTriangular(std::move(a));
            return cov;
        }
        shift = shift > 0.0 ? shift * 10.0 : 1e-14 * scale;
    }
    throw NotPositiveDefinite("rough Bergomi covariance");
}

/// Simulated paths. Column 0 holds the initial state.
struct RbPathSet {
    Matrix s;  ///< P x (N+1) prices
    Matrix v;  ///< P x (N+1) variances
    Matrix g;  ///< P x 2N standard normals that generated each path

    [[nodiscard]] int size() const { return static_cast<int>(s.rows()); }
    [[nodiscard]] int n_steps() const { return static_cast<int>(s.cols()) - 1; }
};

/// Euler paths: S_{n+1} = S_n exp((r - V_n/2)Δt + √V_n ΔW_{n+1}),
/// V_{n+1} = ξ₀ exp(-η² t_{n+1}^{2H}/2 + η W̃_{t_{n+1}}).
/// Path p uses gaussian_stream(seed, p).
inline RbPathSet rb_simulate(const RbParams &params, const RbCovariance &cov, int p_count, std::uint64_t seed) {
    params.validate();
    if (p_count < 1) throw InvalidArgument("need at least one path");
    const int n_steps = cov.n_steps;
    RbPathSet paths;
    paths.s.resize(p_count, n_steps + 1);
    paths.v.resize(p_count, n_steps + 1);
    paths.g.resize(p_count, 2 * n_steps);
    const auto lower = cov.lambda.matrix().triangularView<Eigen::Lower>();
    parallel_for(static_cast<std::size_t>(p_count), [&](std::size_t idx) {
        const auto p = static_cast<Eigen::Index>(idx);
        const Vector g = gaussian_stream(seed, idx, 2 * n_steps);
        const Vector r = lower * g;
        double log_s = std::log(params.s0);
        double var = params.xi0;
        paths.s(p, 0) = params.s0;
        paths.v(p, 0) = params.xi0;
        for (int n = 0; n < n_steps; ++n) {
            log_s += (params.rate - 0.5 * var) * cov.dt + std::sqrt(var) * r[2 * n];
            const double t_next = cov.time(n + 1);
            var = params.xi0 * std::exp(-0.5 * params.eta * params.eta * std::pow(t_next, 2.0 * params.hurst) +
                                        params.eta * r[2 * n + 1]);
            paths.s(p, n + 1) = std::exp(log_s);
            paths.v(p, n + 1) = var;
        }
        paths.g.row(p) = g.transpose();
    });
    return paths;
}

/// Symmetric four-point law matching the first seven standard normal moments.
struct AlfonsiVar {
    std::array<double, 4> support;
    std::array<double, 4> probs;
};

inline AlfonsiVar alfonsi_nodes() {
    const double r6 = std::sqrt(6.0);
    const double outer = std::sqrt(3.0 + r6);
    const double inner = std::sqrt(3.0 - r6);
    const double p1 = (r6 - 2.0) / (4.0 * r6);
    const double p2 = 0.5 - p1;
    return {{outer, -outer, inner, -inner}, {p1, p1, p2, p2}};
}

}  // namespace gpra
