#pragma once

// Multi-asset Black-Scholes model: parameters, basket payoffs, the
// equiprobable 2^d one-step lattice and the reference pricers used as
// benchmarks (CRR, full multi-asset lattice, geometric-mean reduction).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "gpra/errors.hpp"
#include "gpra/linalg.hpp"

namespace gpra {

class BsParams {
public:
    BsParams(Vector spot, double rate, Vector vols, SymMatrix corr)
        : spot_(std::move(spot)), rate_(rate), vols_(std::move(vols)), corr_(std::move(corr)) {
        const auto d = spot_.size();
        if (d < 1) throw InvalidArgument("BsParams needs at least one asset");
        if (vols_.size() != d || corr_.n() != d) throw DimensionMismatch("BsParams spot/vols/corr sizes differ");
        if (!(spot_.array() > 0.0).all() || !spot_.allFinite()) throw InvalidArgument("spots must be positive");
        if (!(vols_.array() >= 0.0).all() || !vols_.allFinite()) throw InvalidArgument("vols must be non-negative");
        if (!std::isfinite(rate_)) throw InvalidArgument("rate must be finite");
        for (Eigen::Index i = 0; i < d; ++i) {
            if (std::abs(corr_(i, i) - 1.0) > 1e-12) throw InvalidArgument("correlation diagonal must be 1");
            for (Eigen::Index j = 0; j < d; ++j) {
                if (std::abs(corr_(i, j)) > 1.0 + 1e-12) throw InvalidArgument("correlation entries must lie in [-1, 1]");
            }
        }
        chol_ = cholesky_semidefinite(corr_);
    }

    /// d identical assets with equicorrelation rho.
    static BsParams basket(int d, double spot, double rate, double vol, double rho) {
        return {Vector::Constant(d, spot), rate, Vector::Constant(d, vol), SymMatrix::equicorrelation(d, rho)};
    }

    [[nodiscard]] int dim() const { return static_cast<int>(spot_.size()); }
    [[nodiscard]] const Vector &spot() const { return spot_; }
    [[nodiscard]] double rate() const { return rate_; }
    [[nodiscard]] const Vector &vols() const { return vols_; }
    [[nodiscard]] const SymMatrix &corr() const { return corr_; }
    /// Lower square root of the correlation matrix.
    [[nodiscard]] const LowerTriangular &chol() const { return chol_; }

    /// Per-asset log drift (r - σᵢ²/2).
    [[nodiscard]] Vector log_drift() const { return (rate_ - 0.5 * vols_.array().square()).matrix(); }

    /// Covariance of the log-increments over dt: ρᵢⱼ σᵢ σⱼ dt.
    [[nodiscard]] SymMatrix log_increment_cov(double dt) const {
        Matrix pi = corr_.matrix().array() * (vols_ * vols_.transpose()).array() * dt;
        return SymMatrix(std::move(pi));
    }

private:
    Vector spot_;
    double rate_;
    Vector vols_;
    SymMatrix corr_;
    LowerTriangular chol_;
};

enum class PayoffKind { GeometricPut, ArithmeticPut, CallOnMax };

struct Payoff {
    PayoffKind kind;
    double strike;

    Payoff(PayoffKind k, double s) : kind(k), strike(s) {
        if (!(strike > 0.0)) throw InvalidArgument("strike must be positive");
    }
};

inline std::string to_string(PayoffKind kind) {
    switch (kind) {
        case PayoffKind::GeometricPut: return "geo-put";
        case PayoffKind::ArithmeticPut: return "ari-put";
        case PayoffKind::CallOnMax: return "call-max";
    }
    return "?";
}

template <class Derived>
double payoff_eval(const Payoff &p, const Eigen::DenseBase<Derived> &s) {
    switch (p.kind) {
        case PayoffKind::GeometricPut:
            return std::max(p.strike - std::exp(s.derived().array().log().mean()), 0.0);
        case PayoffKind::ArithmeticPut:
            return std::max(p.strike - s.derived().mean(), 0.0);
        case PayoffKind::CallOnMax:
            return std::max(s.derived().maxCoeff() - p.strike, 0.0);
    }
    return 0.0;
}

/// Payoff of every row of a matrix of price vectors.
inline Vector payoff_rows(const Payoff &p, const Matrix &rows) {
    Vector out(rows.rows());
    for (Eigen::Index i = 0; i < rows.rows(); ++i) out[i] = payoff_eval(p, rows.row(i));
    return out;
}

inline constexpr int kMaxEkvallDim = 20;
inline constexpr int kEkvallMaterializeDim = 12;

namespace detail {

/// Assets whose lattice signs vary inside one streamed block.
inline int ekvall_block_bits(int d) { return std::min(d, 10); }

}  // namespace detail

/// Streams the 2^d equally likely one-step children of x in blocks.
///
/// Child k (0-based) uses G with component j equal to +1 when bit (d-1-j) of
/// k is set and -1 otherwise, so asset 1 is the most significant bit. Each
/// call to `sink` receives a block of consecutive children as rows; blocks
/// arrive in increasing child order.
template <class Sink>
void for_each_ekvall_block(const BsParams &params, const Vector &x, double dt, Sink &&sink) {
    const int d = params.dim();
    if (d > kMaxEkvallDim) {
        throw DimensionTooLarge("Ekvall step supports d <= " + std::to_string(kMaxEkvallDim) + ", got " +
                                std::to_string(d));
    }
    if (x.size() != d) throw DimensionMismatch("Ekvall step point dimension");
    const int low_bits = detail::ekvall_block_bits(d);
    const int high_bits = d - low_bits;
    const Eigen::Index block = Eigen::Index{1} << low_bits;
    const Matrix &sigma = params.chol().matrix();
    const Vector scale = params.vols() * std::sqrt(dt);
    const Vector log_base = x.array().log().matrix() + params.log_drift() * dt;

    // Shock contributions Σ·G split into the high assets (fixed per block) and
    // the low assets (tabulated once).
    Matrix low_shock(block, d);
    for (Eigen::Index l = 0; l < block; ++l) {
        Vector g = Vector::Zero(d);
        for (int b = 0; b < low_bits; ++b) {
            const int asset = d - 1 - b;
            g[asset] = ((l >> b) & 1) ? 1.0 : -1.0;
        }
        low_shock.row(l) = (sigma * g).transpose();
    }
    Matrix children(block, d);
    const std::uint64_t high_count = std::uint64_t{1} << high_bits;
    for (std::uint64_t h = 0; h < high_count; ++h) {
        Vector g = Vector::Zero(d);
        for (int b = 0; b < high_bits; ++b) {
            const int asset = high_bits - 1 - b;
            g[asset] = ((h >> b) & 1) ? 1.0 : -1.0;
        }
        const Vector high_shock = sigma * g;
        for (Eigen::Index l = 0; l < block; ++l) {
            children.row(l) =
                (log_base.array() + scale.array() * (high_shock.array() + low_shock.row(l).transpose().array()))
                    .exp()
                    .transpose();
        }
        sink(static_cast<const Matrix &>(children));
    }
}

/// All 2^d children as rows, in lattice order. Materializes, so d is capped
/// lower than for the streaming form.
inline Matrix ekvall_children(const BsParams &params, const Vector &x, double dt) {
    const int d = params.dim();
    if (d > kEkvallMaterializeDim) {
        throw DimensionTooLarge("materialized Ekvall children need d <= " + std::to_string(kEkvallMaterializeDim) +
                                "; use for_each_ekvall_block");
    }
    Matrix all(Eigen::Index{1} << d, d);
    Eigen::Index row = 0;
    for_each_ekvall_block(params, x, dt, [&](const Matrix &block) {
        all.middleRows(row, block.rows()) = block;
        row += block.rows();
    });
    return all;
}

enum class OptionType { Put, Call };

/// Cox-Ross-Rubinstein lattice price with continuous dividend yield.
///
/// Early exercise is allowed at tree steps that are multiples of
/// `exercise_stride` (1 = American on the tree grid, 0 = European).
inline double crr_american_price_1d(double spot, double rate, double vol, double strike, double maturity, int steps,
                                    OptionType type, double dividend = 0.0, int exercise_stride = 1) {
    if (steps < 1) throw InvalidArgument("CRR needs at least one step");
    if (!(spot > 0.0) || !(strike > 0.0) || !(vol >= 0.0) || !(maturity > 0.0)) {
        throw InvalidArgument("CRR inputs out of range");
    }
    auto intrinsic = [&](double s) { return type == OptionType::Put ? std::max(strike - s, 0.0) : std::max(s - strike, 0.0); };
    auto may_exercise = [&](int step) { return exercise_stride > 0 && step % exercise_stride == 0; };
    const double dt = maturity / steps;
    const double disc = std::exp(-rate * dt);
    if (vol == 0.0) {
        // Deterministic forward: value is the best discounted exercise.
        double best = intrinsic(spot * std::exp((rate - dividend) * maturity)) * std::exp(-rate * maturity);
        for (int n = 0; n < steps; ++n) {
            if (!may_exercise(n)) continue;
            const double t = n * dt;
            best = std::max(best, intrinsic(spot * std::exp((rate - dividend) * t)) * std::exp(-rate * t));
        }
        return best;
    }
    const double u = std::exp(vol * std::sqrt(dt));
    const double down = 1.0 / u;
    const double pu = (std::exp((rate - dividend) * dt) - down) / (u - down);
    const double pd = 1.0 - pu;
    std::vector<double> v(static_cast<std::size_t>(steps) + 1);
    // node j at step n: spot * u^(n - 2j)
    for (int j = 0; j <= steps; ++j) v[static_cast<std::size_t>(j)] = intrinsic(spot * std::pow(u, steps - 2 * j));
    for (int n = steps - 1; n >= 0; --n) {
        const bool ex = may_exercise(n);
        for (int j = 0; j <= n; ++j) {
            const auto k = static_cast<std::size_t>(j);
            double cont = disc * (pu * v[k] + pd * v[k + 1]);
            if (ex) cont = std::max(cont, intrinsic(spot * std::pow(u, n - 2 * j)));
            v[k] = cont;
        }
    }
    return v[0];
}

/// One-dimensional GBM followed by the geometric mean of the basket.
struct GeometricReduction {
    double spot;
    double vol;
    double dividend;
};

inline GeometricReduction geometric_reduction(const BsParams &params) {
    const double d = params.dim();
    const Vector &vols = params.vols();
    const double var = (params.corr().matrix().array() * (vols * vols.transpose()).array()).sum() / (d * d);
    const double eff_vol = std::sqrt(std::max(var, 0.0));
    const double eff_spot = std::exp(params.spot().array().log().mean());
    const double dividend = vols.squaredNorm() / (2.0 * d) - 0.5 * var;
    return {eff_spot, eff_vol, dividend};
}

/// American geometric-basket put priced on the reduced one-dimensional model.
inline double geometric_put_benchmark(const BsParams &params, double strike, double maturity, int steps = 1000) {
    const auto g = geometric_reduction(params);
    return crr_american_price_1d(g.spot, params.rate(), g.vol, strike, maturity, steps, OptionType::Put, g.dividend);
}

inline constexpr int kMaxEkvallTreeDim = 5;
inline constexpr std::uint64_t kMaxEkvallTreeNodes = 60'000'000;

/// Full multi-asset equiprobable lattice.
///
/// The lattice recombines: after n steps a node is identified by how many
/// up-moves each asset's sign has taken, giving (n+1)^d nodes. Early exercise
/// is allowed at steps that are multiples of `exercise_stride` (0 = European).
inline double ekvall_tree_price(const BsParams &params, const Payoff &payoff, double maturity, int steps,
                                int exercise_stride = 1) {
    const int d = params.dim();
    if (d > kMaxEkvallTreeDim) {
        throw DimensionTooLarge("full lattice supports d <= " + std::to_string(kMaxEkvallTreeDim));
    }
    if (steps < 1) throw InvalidArgument("lattice needs at least one step");
    const double top = std::pow(static_cast<double>(steps) + 1.0, d);
    if (top > static_cast<double>(kMaxEkvallTreeNodes)) {
        throw DimensionTooLarge("lattice would need " + std::to_string(top) + " nodes");
    }
    const double dt = maturity / steps;
    const double disc = std::exp(-params.rate() * dt);
    const Matrix &sigma = params.chol().matrix();
    const Vector scale = params.vols() * std::sqrt(dt);
    const Vector log_spot = params.spot().array().log().matrix();
    const Vector drift = params.log_drift() * dt;

    auto level_size = [d](int n) {
        std::size_t s = 1;
        for (int i = 0; i < d; ++i) s *= static_cast<std::size_t>(n + 1);
        return s;
    };
    // Prices at level n; node index is row-major over the d up-move counts.
    auto node_payoffs = [&](int n, std::vector<double> &out) {
        const std::size_t size = level_size(n);
        out.resize(size);
        std::vector<int> c(static_cast<std::size_t>(d), 0);
        Vector g(d);
        Vector s(d);
        for (std::size_t idx = 0; idx < size; ++idx) {
            for (int j = 0; j < d; ++j) g[j] = 2.0 * c[static_cast<std::size_t>(j)] - n;
            s = (log_spot + n * drift + scale.cwiseProduct(sigma * g)).array().exp().matrix();
            out[idx] = payoff_eval(payoff, s);
            for (int j = d - 1; j >= 0; --j) {
                if (++c[static_cast<std::size_t>(j)] <= n) break;
                c[static_cast<std::size_t>(j)] = 0;
            }
        }
    };

    std::vector<double> v;
    node_payoffs(steps, v);
    std::vector<double> exercise;
    for (int n = steps - 1; n >= 0; --n) {
        // Average over the 2^d children separately along each axis: the full
        // average of v[c + y], y in {0,1}^d, is a tensor product of pair means.
        // Axis a shrinks from n+2 to n+1 entries.
        std::vector<int> extent(static_cast<std::size_t>(d), n + 2);
        for (int a = 0; a < d; ++a) {
            std::size_t outer = 1;
            std::size_t inner = 1;
            for (int i = 0; i < a; ++i) outer *= static_cast<std::size_t>(extent[static_cast<std::size_t>(i)]);
            for (int i = a + 1; i < d; ++i) inner *= static_cast<std::size_t>(extent[static_cast<std::size_t>(i)]);
            const auto len = static_cast<std::size_t>(n + 2);
            std::vector<double> next(outer * (len - 1) * inner);
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t k = 0; k + 1 < len; ++k) {
                    const double *lo = &v[(o * len + k) * inner];
                    const double *hi = &v[(o * len + k + 1) * inner];
                    double *dst = &next[(o * (len - 1) + k) * inner];
                    for (std::size_t i = 0; i < inner; ++i) dst[i] = 0.5 * (lo[i] + hi[i]);
                }
            }
            v.swap(next);
            extent[static_cast<std::size_t>(a)] = n + 1;
        }
        for (double &x : v) x *= disc;
        if (exercise_stride > 0 && n % exercise_stride == 0) {
            node_payoffs(n, exercise);
            for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::max(v[i], exercise[i]);
        }
    }
    return v[0];
}

}  // namespace gpra
