#pragma once

// Dense linear algebra and quadrature shared by the pricers.

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numbers>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

#include "gpra/errors.hpp"

namespace gpra {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Symmetric n x n matrix. Construction symmetrizes the input after checking
/// that it is symmetric to within roundoff.
class SymMatrix {
public:
    SymMatrix() = default;

    explicit SymMatrix(Matrix entries) : m_(std::move(entries)) {
        if (m_.rows() != m_.cols() || m_.rows() < 1) {
            throw DimensionMismatch("SymMatrix needs a non-empty square matrix, got " + std::to_string(m_.rows()) +
                                    "x" + std::to_string(m_.cols()));
        }
        const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
        if (!((m_ - m_.transpose()).cwiseAbs().maxCoeff() <= 1e-10 * scale)) {
            throw InvalidArgument("SymMatrix input is not symmetric");
        }
        m_ = 0.5 * (m_ + m_.transpose()).eval();
    }

    static SymMatrix identity(Eigen::Index n) { return SymMatrix(Matrix::Identity(n, n)); }

    /// Unit-diagonal matrix with every off-diagonal entry equal to rho.
    static SymMatrix equicorrelation(Eigen::Index n, double rho) {
        Matrix m = Matrix::Constant(n, n, rho);
        m.diagonal().setOnes();
        return SymMatrix(std::move(m));
    }

    [[nodiscard]] Eigen::Index n() const { return m_.rows(); }
    [[nodiscard]] double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
    [[nodiscard]] const Matrix &matrix() const { return m_; }

private:
    Matrix m_;
};

/// Lower-triangular n x n matrix; entries above the diagonal are zero.
class LowerTriangular {
public:
    LowerTriangular() = default;

    explicit LowerTriangular(Matrix entries) : m_(std::move(entries)) {
        if (m_.rows() != m_.cols() || m_.rows() < 1) {
            throw DimensionMismatch("LowerTriangular needs a non-empty square matrix");
        }
        m_.triangularView<Eigen::StrictlyUpper>().setZero();
    }

    [[nodiscard]] Eigen::Index n() const { return m_.rows(); }
    [[nodiscard]] double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
    [[nodiscard]] const Matrix &matrix() const { return m_; }
    [[nodiscard]] auto row(Eigen::Index i) const { return m_.row(i); }

    /// L * x
    [[nodiscard]] Vector apply(const Vector &x) const {
        if (x.size() != n()) throw DimensionMismatch("LowerTriangular::apply");
        return m_.triangularView<Eigen::Lower>() * x;
    }

private:
    Matrix m_;
};

/// Relative pivot tolerance: a pivot below this fraction of the largest
/// diagonal entry is treated as a failure.
inline constexpr double kCholeskyPivotTolerance = 1e-12;

namespace detail {

/// Factorizes `a` in place (lower triangle receives L). Returns false if the
/// matrix is not numerically positive definite.
inline bool cholesky_in_place(Matrix &a, double rel_tol = kCholeskyPivotTolerance) {
    const double max_diag = a.diagonal().maxCoeff();
    if (!(max_diag > 0.0) || !std::isfinite(max_diag)) return false;
    Eigen::LLT<Eigen::Ref<Matrix>> llt(a);
    if (llt.info() != Eigen::Success) return false;
    const double min_pivot = a.diagonal().minCoeff();
    return std::isfinite(min_pivot) && min_pivot * min_pivot >= rel_tol * max_diag;
}

}  // namespace detail

inline LowerTriangular cholesky_lower(const SymMatrix &a) {
    Matrix work = a.matrix();
    if (!detail::cholesky_in_place(work)) {
        throw NotPositiveDefinite("Cholesky pivot below tolerance for " + std::to_string(a.n()) + "x" +
                                  std::to_string(a.n()) + " matrix");
    }
    return LowerTriangular(std::move(work));
}

/// Lower square root of a positive semidefinite matrix. Pivots that vanish to
/// within tolerance produce zero columns (e.g. perfectly correlated assets);
/// a clearly negative pivot still fails.
inline LowerTriangular cholesky_semidefinite(const SymMatrix &a) {
    const Eigen::Index n = a.n();
    const double max_diag = a.matrix().diagonal().cwiseAbs().maxCoeff();
    const double tol = 1e-10 * std::max(max_diag, 1e-300);
    Matrix l = Matrix::Zero(n, n);
    for (Eigen::Index j = 0; j < n; ++j) {
        double pivot = a(j, j) - l.row(j).head(j).squaredNorm();
        if (pivot < -tol) throw NotPositiveDefinite("negative pivot in semidefinite factorization");
        if (pivot <= tol) continue;
        const double ljj = std::sqrt(pivot);
        l(j, j) = ljj;
        for (Eigen::Index i = j + 1; i < n; ++i) {
            l(i, j) = (a(i, j) - l.row(i).head(j).dot(l.row(j).head(j))) / ljj;
        }
    }
    // A zero column must leave a zero residual below it.
    const double residual = (l * l.transpose() - a.matrix()).cwiseAbs().maxCoeff();
    if (residual > 1e-8 * std::max(1.0, max_diag)) throw NotPositiveDefinite("matrix is not positive semidefinite");
    return LowerTriangular(std::move(l));
}

/// Solves (L Lᵀ) x = b.
inline Vector psd_solve(const LowerTriangular &l, const Vector &b) {
    if (b.size() != l.n()) {
        throw DimensionMismatch("psd_solve: factor is " + std::to_string(l.n()) + ", rhs is " +
                                std::to_string(b.size()));
    }
    Vector x = l.matrix().triangularView<Eigen::Lower>().solve(b);
    l.matrix().triangularView<Eigen::Lower>().transpose().solveInPlace(x);
    return x;
}

inline double log_det_from_cholesky(const LowerTriangular &l) {
    return 2.0 * l.matrix().diagonal().array().log().sum();
}

/// Gauss-Legendre nodes and weights mapped to [0, 1].
struct GaussLegendreRule {
    std::vector<double> nodes;
    std::vector<double> weights;

    explicit GaussLegendreRule(int count) : nodes(static_cast<std::size_t>(count)), weights(nodes.size()) {
        if (count < 1) throw InvalidArgument("Gauss-Legendre node count must be positive");
        const int n = count;
        for (int i = 0; i < (n + 1) / 2; ++i) {
            double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
            double dp = 0.0;
            for (int iter = 0; iter < 100; ++iter) {
                double p0 = 1.0;
                double p1 = 0.0;
                for (int k = 1; k <= n; ++k) {
                    const double p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p2) / k;
                }
                dp = n * (x * p0 - p1) / (x * x - 1.0);
                const double dx = p0 / dp;
                x -= dx;
                if (std::abs(dx) < 1e-16) break;
            }
            const double w = 2.0 / ((1.0 - x * x) * dp * dp);
            const auto lo = static_cast<std::size_t>(i);
            const auto hi = static_cast<std::size_t>(n - 1 - i);
            nodes[lo] = 0.5 * (1.0 - x);
            nodes[hi] = 0.5 * (1.0 + x);
            weights[lo] = 0.5 * w;
            weights[hi] = 0.5 * w;
        }
    }

    [[nodiscard]] std::size_t size() const { return nodes.size(); }
};

inline constexpr int kSingularQuadratureNodes = 64;

namespace detail {

/// Upper limit on the number of graded panels.
inline constexpr int kSingularPanels = 24;

template <class F>
double singular_gauss_legendre_with(F &&f, double h, const GaussLegendreRule &rule) {
    // s = 1 - u^{1/h}; ds = (1/h) u^{1/h - 1} du. The caller can receive the
    // exact value of 1 - s to avoid cancellation near the singular endpoint.
    // After the substitution the integrand still carries a u^{1/h} term that
    // is not smooth at u = 0, so the rule is applied on panels [2^-(k+1), 2^-k]
    // shrinking toward that end. Grading stops once 1 - s at the panel edge
    // drops below 1e-12, where the remaining sliver is negligible.
    constexpr bool split_form = std::is_invocable_r_v<double, F, double, double>;
    const double inv_h = 1.0 / h;
    const int panels = std::clamp(static_cast<int>(12.0 * h * std::log2(10.0)), 1, kSingularPanels);
    double sum = 0.0;
    double hi = 1.0;
    for (int panel = 0; panel < panels; ++panel) {
        const double lo = panel + 1 == panels ? 0.0 : 0.5 * hi;
        const double width = hi - lo;
        double part = 0.0;
        for (std::size_t k = 0; k < rule.size(); ++k) {
            const double u = lo + width * rule.nodes[k];
            const double one_minus_s = std::pow(u, inv_h);
            const double jac = inv_h * one_minus_s / u;
            double value;
            if constexpr (split_form) {
                value = f(1.0 - one_minus_s, one_minus_s);
            } else {
                // s would round to the singular endpoint itself.
                if (1.0 - one_minus_s == 1.0) continue;
                value = f(1.0 - one_minus_s);
            }
            part += rule.weights[k] * jac * value;
        }
        sum += width * part;
        hi = lo;
    }
    return sum;
}

}  // namespace detail

/// Integrates f over [0, 1] when f behaves like (1 - s)^{h - 1} at s = 1.
///
/// The substitution u = (1 - s)^h absorbs the endpoint singularity before a
/// fixed Gauss-Legendre rule of `nodes` points is applied on each of the
/// graded panels. `f` may take either `s` or `(s, 1 - s)`; the second form
/// receives 1 - s without cancellation.
template <class F>
double singular_gauss_legendre(F &&f, double h, int nodes = kSingularQuadratureNodes) {
    if (!(h > 0.0 && h < 1.0)) throw InvalidExponent("singularity exponent must lie in (0, 1), got " + std::to_string(h));
    const GaussLegendreRule rule(nodes);
    const double result = detail::singular_gauss_legendre_with(f, h, rule);
#ifndef NDEBUG
    const GaussLegendreRule doubled(2 * nodes);
    const double check = detail::singular_gauss_legendre_with(f, h, doubled);
    assert(std::abs(result - check) <= 1e-6 * std::max(1.0, std::abs(check)));
#endif
    return result;
}

}  // namespace gpra
