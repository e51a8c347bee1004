#pragma once

// Gaussian process regression with squared-exponential kernels: kernel
// evaluation, marginal likelihood, hyperparameter fitting and prediction.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "gpra/errors.hpp"
#include "gpra/linalg.hpp"

namespace gpra {

enum class KernelKind { SE, ARD };

/// Kernel hyperparameters. SE carries one length scale, ARD one per predictor.
struct KernelSpec {
    KernelKind kind = KernelKind::SE;
    double signal_std = 1.0;
    Vector length_scales = Vector::Ones(1);

    void validate(Eigen::Index predictor_dim) const {
        if (!(signal_std > 0.0) || !std::isfinite(signal_std)) throw InvalidArgument("signal std must be positive");
        if (length_scales.size() < 1 || !(length_scales.array() > 0.0).all() || !length_scales.allFinite()) {
            throw InvalidArgument("length scales must be positive");
        }
        if (kind == KernelKind::SE && length_scales.size() != 1) {
            throw InvalidArgument("SE kernel takes exactly one length scale");
        }
        if (kind == KernelKind::ARD && length_scales.size() != predictor_dim) {
            throw DimensionMismatch("ARD kernel has " + std::to_string(length_scales.size()) +
                                    " length scales for dimension " + std::to_string(predictor_dim));
        }
    }

    /// Per-coordinate length scales expanded to dimension d.
    [[nodiscard]] Vector scales_for(Eigen::Index d) const {
        return kind == KernelKind::SE ? Vector::Constant(d, length_scales[0]) : length_scales;
    }
};

template <class A, class B>
double kernel_eval(const KernelSpec &spec, const Eigen::MatrixBase<A> &a, const Eigen::MatrixBase<B> &b) {
    if (a.size() != b.size()) throw DimensionMismatch("kernel_eval operands differ in size");
    if (spec.kind == KernelKind::ARD && spec.length_scales.size() != a.size()) {
        throw DimensionMismatch("kernel_eval: ARD length scales vs point dimension");
    }
    double r2 = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i) {
        const double l = spec.kind == KernelKind::SE ? spec.length_scales[0] : spec.length_scales[i];
        const double t = (a[i] - b[i]) / l;
        r2 += t * t;
    }
    return spec.signal_std * spec.signal_std * std::exp(-0.5 * r2);
}

namespace detail {

/// exp(-½ |(a - b) / ℓ|²) for all row pairs, without the signal variance.
/// Rows are shifted by `center` first so the expanded-square form stays
/// accurate.
inline Matrix unit_kernel_matrix(const Matrix &a, const Matrix &b, const Vector &scales, const Vector &center) {
    const Eigen::RowVectorXd inv = scales.cwiseInverse().transpose();
    const Matrix as = (a.rowwise() - center.transpose()).array().rowwise() * inv.array();
    const Matrix bs = (b.rowwise() - center.transpose()).array().rowwise() * inv.array();
    const Vector an = as.rowwise().squaredNorm();
    const Vector bn = bs.rowwise().squaredNorm();
    Matrix k = -2.0 * as * bs.transpose();
    k.colwise() += an;
    k.rowwise() += bn.transpose();
    return (-0.5 * k.array().max(0.0)).exp().matrix();
}

/// Symmetric training version; the diagonal is exactly one.
inline void unit_kernel_matrix_sym(const Matrix &xs, Matrix &out) {
    const Vector n = xs.rowwise().squaredNorm();
    out.noalias() = -2.0 * xs * xs.transpose();
    out.colwise() += n;
    out.rowwise() += n.transpose();
    out = (-0.5 * out.array().max(0.0)).exp().matrix();
    out.diagonal().setOnes();
}

}  // namespace detail

/// Fitted posterior-mean surrogate:
///   f(x) = mean + Σ_q k(x_q, x) ω_q.
struct GprModel {
    KernelSpec kernel;
    Matrix train_x;       ///< P x d predictors
    Vector weights;       ///< ω, solves (K + noise I) ω = y - mean
    double noise_var = 0.0;
    double noise_ratio = 0.0;    ///< noise_var / var(y)
    int jitter_escalations = 0;  ///< tenfold noise increases needed to factorize
    double mean = 0.0;    ///< response centering constant
    double log_likelihood = -std::numeric_limits<double>::infinity();
    Vector center;        ///< predictor centroid, used only for numerics

    [[nodiscard]] Eigen::Index dim() const { return train_x.cols(); }
    [[nodiscard]] Eigen::Index size() const { return train_x.rows(); }
    [[nodiscard]] Vector scales() const { return kernel.scales_for(dim()); }

    /// Kernel values k(x_q, row) for each row of `x` (rows x P).
    [[nodiscard]] Matrix cross_kernel(const Matrix &x) const {
        if (x.cols() != dim()) throw DimensionMismatch("prediction points have the wrong dimension");
        return kernel.signal_std * kernel.signal_std * detail::unit_kernel_matrix(x, train_x, scales(), center);
    }
};

template <class Derived>
double predict(const GprModel &model, const Eigen::MatrixBase<Derived> &x_star) {
    if (x_star.size() != model.dim()) throw DimensionMismatch("predict: point dimension");
    double sum = 0.0;
    for (Eigen::Index q = 0; q < model.size(); ++q) {
        sum += kernel_eval(model.kernel, model.train_x.row(q), x_star) * model.weights[q];
    }
    return model.mean + sum;
}

/// Predictions for every row of `x`.
inline Vector predict_batch(const GprModel &model, const Matrix &x) {
    Vector out = model.cross_kernel(x) * model.weights;
    out.array() += model.mean;
    return out;
}

inline constexpr double kDefaultJitter = 1e-8;
inline constexpr int kMaxJitterEscalations = 4;

/// Log marginal likelihood of y under GP(0, k_spec) with noise variance
/// `noise_var`, computed through a Cholesky factor. The noise is escalated
/// tenfold up to four times if the factorization fails.
inline double log_marginal_likelihood(const KernelSpec &spec, double noise_var, const Matrix &x, const Vector &y) {
    if (x.rows() != y.size()) throw DimensionMismatch("log_marginal_likelihood: rows(x) != len(y)");
    if (y.size() < 2) throw InvalidArgument("log_marginal_likelihood needs at least 2 observations");
    spec.validate(x.cols());
    const Eigen::Index p = y.size();
    const Vector center = x.colwise().mean().transpose();
    const Matrix xs = (x.rowwise() - center.transpose()).array().rowwise() *
                      spec.scales_for(x.cols()).cwiseInverse().transpose().array();
    Matrix base;
    detail::unit_kernel_matrix_sym(xs, base);
    base *= spec.signal_std * spec.signal_std;
    double noise = noise_var;
    for (int attempt = 0; attempt <= kMaxJitterEscalations; ++attempt) {
        Matrix a = base;
        a.diagonal().array() += noise;
        if (detail::cholesky_in_place(a)) {
            const auto l = a.triangularView<Eigen::Lower>();
            const Vector v = l.solve(y);
            const double log_det = 2.0 * a.diagonal().array().log().sum();
            return -0.5 * v.squaredNorm() - 0.5 * log_det - 0.5 * static_cast<double>(p) * std::log(2.0 * std::numbers::pi);
        }
        noise = noise > 0.0 ? noise * 10.0 : kDefaultJitter * std::max(1e-300, base.diagonal().maxCoeff());
    }
    throw NotPositiveDefinite("kernel matrix after jitter escalation");
}

struct FitOptions {
    /// Noise variance as a fraction of the response variance. With
    /// `estimate_noise` this is a lower bound and the ratio is fitted too.
    double jitter = kDefaultJitter;
    bool estimate_noise = false;
    /// Noise ratio to start from when warm starting with estimated noise.
    std::optional<double> warm_noise_ratio;
    int restarts = 5;
    /// Start from these hyperparameters with a single local search, if the
    /// dimension matches.
    std::optional<KernelSpec> warm_start;
    /// Length-scale bounds as a factor around the data-driven initialization.
    double bound_factor = 1e3;
    int max_evals_per_start = 0;  ///< 0 = automatic
};

namespace detail {

struct LikelihoodEval {
    double lml = -std::numeric_limits<double>::infinity();
    double noise_var = 0.0;
};

/// Marginal likelihood as a function of log hyperparameters
///   (log σ_f, log ℓ [, log(σ_n² / floor)])
/// where the last coordinate is present only when the noise is estimated.
/// On success `alpha` = (K + σ_n² I)⁻¹ y.
class LikelihoodObjective {
public:
    LikelihoodObjective(const Matrix &x, const Vector &y_centered, const Vector &center, double noise_floor,
                        bool estimate_noise)
        : x_(x.rowwise() - center.transpose()), y_(y_centered), noise_(noise_floor), estimate_noise_(estimate_noise) {}

    LikelihoodEval evaluate(const Vector &params) {
        const Eigen::Index d = x_.cols();
        const Eigen::Index k = params.size() - 1 - (estimate_noise_ ? 1 : 0);
        if (k != 1 && k != d) throw DimensionMismatch("length scale count vs predictor dimension");
        const double signal_var = std::exp(2.0 * params[0]);
        const Vector inv = k == 1 ? Vector::Constant(d, std::exp(-params[1])).eval()
                                  : (-params.segment(1, k)).array().exp().matrix().eval();
        const Matrix xs = x_.array().rowwise() * inv.transpose().array();
        unit_kernel_matrix_sym(xs, kernel_);
        kernel_ *= signal_var;
        const auto p = static_cast<double>(y_.size());
        double noise = estimate_noise_ ? noise_ * std::exp(params[params.size() - 1]) : noise_;
        for (int attempt = 0; attempt <= kMaxJitterEscalations; ++attempt, noise *= 10.0) {
            work_ = kernel_;
            work_.diagonal().array() += noise;
            if (!cholesky_in_place(work_)) continue;
            alpha_ = work_.triangularView<Eigen::Lower>().solve(y_);
            const double quad = alpha_.squaredNorm();
            work_.triangularView<Eigen::Lower>().transpose().solveInPlace(alpha_);
            const double log_det = 2.0 * work_.diagonal().array().log().sum();
            const double lml = -0.5 * quad - 0.5 * log_det - 0.5 * p * std::log(2.0 * std::numbers::pi);
            if (!std::isfinite(lml)) continue;
            return {lml, noise};
        }
        return {};
    }

    [[nodiscard]] const Vector &alpha() const { return alpha_; }

private:
    Matrix x_;
    Vector y_;
    double noise_;
    bool estimate_noise_;
    Matrix kernel_;
    Matrix work_;
    Vector alpha_;
};

/// Bounded Nelder-Mead maximization. Points outside [lo, hi] are projected.
template <class F>
std::pair<Vector, double> nelder_mead_max(F &&f, Vector start, double step, const Vector &lo, const Vector &hi,
                                          int max_evals, double ftol = 1e-7, double xtol = 1e-3) {
    const Eigen::Index n = start.size();
    auto clamp = [&](Vector v) { return v.cwiseMax(lo).cwiseMin(hi).eval(); };
    std::vector<Vector> pts;
    std::vector<double> vals;
    int evals = 0;
    auto eval = [&](const Vector &v) {
        ++evals;
        const double r = f(v);
        return std::isfinite(r) ? r : -std::numeric_limits<double>::infinity();
    };
    pts.push_back(clamp(start));
    vals.push_back(eval(pts[0]));
    for (Eigen::Index i = 0; i < n; ++i) {
        Vector v = pts[0];
        v[i] += (v[i] + step <= hi[i]) ? step : -step;
        pts.push_back(clamp(v));
        vals.push_back(eval(pts.back()));
    }
    std::vector<std::size_t> order(pts.size());
    while (evals < max_evals) {
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] > vals[b]; });
        const std::size_t best = order.front();
        const std::size_t worst = order.back();
        const std::size_t second = order[order.size() - 2];
        double spread = 0.0;
        for (const auto &p : pts) spread = std::max(spread, (p - pts[best]).cwiseAbs().maxCoeff());
        if (std::isfinite(vals[worst]) && std::abs(vals[best] - vals[worst]) <= ftol * (1.0 + std::abs(vals[best])) &&
            spread <= xtol) {
            break;
        }
        Vector centroid = Vector::Zero(n);
        for (std::size_t i = 0; i + 1 < order.size(); ++i) centroid += pts[order[i]];
        centroid /= static_cast<double>(n);
        const Vector reflected = clamp(centroid + (centroid - pts[worst]));
        const double fr = eval(reflected);
        if (fr > vals[best]) {
            const Vector expanded = clamp(centroid + 2.0 * (centroid - pts[worst]));
            const double fe = eval(expanded);
            if (fe > fr) {
                pts[worst] = expanded;
                vals[worst] = fe;
            } else {
                pts[worst] = reflected;
                vals[worst] = fr;
            }
            continue;
        }
        if (fr > vals[second]) {
            pts[worst] = reflected;
            vals[worst] = fr;
            continue;
        }
        const bool outside = fr > vals[worst];
        const Vector contracted =
            outside ? clamp(centroid + 0.5 * (reflected - centroid)) : clamp(centroid + 0.5 * (pts[worst] - centroid));
        const double fc = eval(contracted);
        if (outside ? fc >= fr : fc > vals[worst]) {
            pts[worst] = contracted;
            vals[worst] = fc;
            continue;
        }
        for (std::size_t i = 1; i < order.size(); ++i) {
            const std::size_t k = order[i];
            pts[k] = clamp(pts[best] + 0.5 * (pts[k] - pts[best]));
            vals[k] = eval(pts[k]);
        }
    }
    const auto it = std::max_element(vals.begin(), vals.end());
    return {pts[static_cast<std::size_t>(it - vals.begin())], *it};
}

/// Median of |x_i - x_j| per coordinate (ARD) or of the Euclidean distance
/// (SE) over a deterministic subsample of at most 256 points.
inline Vector median_distance_scales(const Matrix &x, KernelKind kind) {
    const Eigen::Index p = x.rows();
    const Eigen::Index d = x.cols();
    const Eigen::Index m = std::min<Eigen::Index>(p, 256);
    std::vector<Eigen::Index> idx(static_cast<std::size_t>(m));
    for (Eigen::Index i = 0; i < m; ++i) idx[static_cast<std::size_t>(i)] = (i * p) / m;
    auto median = [](std::vector<double> &v) {
        if (v.empty()) return 0.0;
        const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
        std::nth_element(v.begin(), mid, v.end());
        return *mid;
    };
    auto fallback = [](double v) { return v > 0.0 && std::isfinite(v) ? v : 1.0; };
    std::vector<double> buf;
    buf.reserve(static_cast<std::size_t>(m * (m - 1) / 2));
    if (kind == KernelKind::SE) {
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = i + 1; j < m; ++j)
                buf.push_back((x.row(idx[static_cast<std::size_t>(i)]) - x.row(idx[static_cast<std::size_t>(j)])).norm());
        return Vector::Constant(1, fallback(median(buf)));
    }
    Vector out(d);
    for (Eigen::Index c = 0; c < d; ++c) {
        buf.clear();
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = i + 1; j < m; ++j)
                buf.push_back(std::abs(x(idx[static_cast<std::size_t>(i)], c) - x(idx[static_cast<std::size_t>(j)], c)));
        out[c] = fallback(median(buf));
    }
    return out;
}

}  // namespace detail

/// Fits a GPR surrogate by maximizing the marginal likelihood.
///
/// Responses are centered on their mean. The noise variance is `jitter`
/// times their variance, either fixed or, with `estimate_noise`, a floor
/// above which a noise ratio is fitted alongside the kernel. Log signal std
/// and log length scales are searched by bounded Nelder-Mead: `restarts`
/// starts around the median-distance initialization, or one start from
/// `warm_start`.
inline GprModel fit(const Matrix &x, const Vector &y, KernelKind kind, const FitOptions &options = {}) {
    if (x.rows() != y.size()) throw DimensionMismatch("fit: rows(x) != len(y)");
    if (y.size() < 2) throw InvalidArgument("fit needs at least 2 observations");
    if (x.cols() < 1) throw InvalidArgument("fit needs at least one predictor");
    if (!x.allFinite()) throw FitFailed("non-finite predictor");
    if (!y.allFinite()) throw FitFailed("non-finite response");

    GprModel model;
    model.kernel.kind = kind;
    model.train_x = x;
    model.center = x.colwise().mean().transpose();
    model.mean = y.mean();
    const Vector yc = y.array() - model.mean;
    const Vector init = detail::median_distance_scales(x, kind);
    model.kernel.length_scales = init;

    // Constant responses: the surrogate is the constant itself.
    if (yc.cwiseAbs().maxCoeff() <= 1e-14 * std::max(1.0, std::abs(model.mean))) {
        model.kernel.signal_std = 1.0;
        model.weights = Vector::Zero(y.size());
        model.noise_var = 0.0;
        return model;
    }

    const double var_y = yc.squaredNorm() / static_cast<double>(yc.size());
    detail::LikelihoodObjective objective(x, yc, model.center, options.jitter * var_y, options.estimate_noise);
    const auto n = static_cast<Eigen::Index>(init.size());
    const Eigen::Index extra = options.estimate_noise ? 1 : 0;
    const Eigen::Index dims = 1 + n + extra;
    const double bound = std::log(options.bound_factor);
    Vector log_init(dims);
    log_init[0] = 0.5 * std::log(var_y);
    log_init.segment(1, n) = init.array().log().matrix();
    Vector lo = log_init.array() - bound;
    Vector hi = log_init.array() + bound;
    if (extra) {
        // Start two decades above the floor; allow up to six.
        log_init[dims - 1] = std::log(100.0);
        lo[dims - 1] = 0.0;
        hi[dims - 1] = std::log(1e6);
    }
    auto f = [&](const Vector &params) { return objective.evaluate(params).lml; };

    Vector best_x = log_init;
    double best_f = -std::numeric_limits<double>::infinity();
    const bool warm = options.warm_start && options.warm_start->kind == kind &&
                      options.warm_start->length_scales.size() == init.size();
    const auto evals_per_dim = static_cast<int>(dims + 1);
    if (warm) {
        const int budget = options.max_evals_per_start > 0 ? options.max_evals_per_start : 15 * evals_per_dim;
        Vector start = log_init;
        start[0] = std::log(options.warm_start->signal_std);
        start.segment(1, n) = options.warm_start->length_scales.array().log().matrix();
        if (extra && options.warm_noise_ratio && *options.warm_noise_ratio > 0.0) {
            start[dims - 1] = std::log(*options.warm_noise_ratio / options.jitter);
        }
        auto [xb, fb] = detail::nelder_mead_max(f, start, 0.25, lo, hi, budget);
        best_x = xb;
        best_f = fb;
    } else {
        const int budget = options.max_evals_per_start > 0 ? options.max_evals_per_start : 30 * evals_per_dim;
        static constexpr double offsets[] = {0.0, -1.5, 1.5, -3.0, 3.0};
        const int starts = std::clamp(options.restarts, 1, 5);
        for (int s = 0; s < starts; ++s) {
            Vector start = log_init;
            start.segment(1, n).array() += offsets[s];
            auto [xb, fb] = detail::nelder_mead_max(f, start, 0.5, lo, hi, budget);
            if (fb > best_f) {
                best_f = fb;
                best_x = xb;
            }
        }
    }
    if (!std::isfinite(best_f)) throw FitFailed("no optimizer start produced a finite likelihood");

    const auto final_fit = objective.evaluate(best_x);
    if (!std::isfinite(final_fit.lml)) throw FitFailed("final factorization failed");
    const double requested = options.jitter * var_y * (extra ? std::exp(best_x[dims - 1]) : 1.0);
    model.kernel.signal_std = std::exp(best_x[0]);
    model.kernel.length_scales = best_x.segment(1, n).array().exp().matrix();
    model.noise_var = final_fit.noise_var;
    model.noise_ratio = final_fit.noise_var / var_y;
    model.jitter_escalations = static_cast<int>(std::lround(std::log10(final_fit.noise_var / requested)));
    model.weights = objective.alpha();
    model.log_likelihood = final_fit.lml;
    return model;
}

}  // namespace gpra
