#pragma once

// Low-discrepancy and pseudo-random inputs: Halton points, the inverse
// normal CDF, the terminal-law state cloud and seeded Gaussian streams.

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string>
#include <vector>

#include "gpra/bs_model.hpp"
#include "gpra/errors.hpp"
#include "gpra/linalg.hpp"

namespace gpra {

/// Radical inverse of `index` in `base`.
inline double halton(std::uint64_t index, std::uint32_t base) {
    if (index < 1) throw InvalidArgument("Halton index starts at 1");
    if (base < 2) throw InvalidArgument("Halton base must be >= 2");
    double result = 0.0;
    double f = 1.0;
    while (index > 0) {
        f /= base;
        result += f * static_cast<double>(index % base);
        index /= base;
    }
    return result;
}

inline std::vector<std::uint32_t> first_primes(int count) {
    std::vector<std::uint32_t> primes;
    primes.reserve(static_cast<std::size_t>(std::max(count, 0)));
    for (std::uint32_t c = 2; static_cast<int>(primes.size()) < count; ++c) {
        bool prime = true;
        for (const auto p : primes) {
            if (p * p > c) break;
            if (c % p == 0) {
                prime = false;
                break;
            }
        }
        if (prime) primes.push_back(c);
    }
    return primes;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

/// Φ⁻¹(u): Acklam's rational approximation polished by one Halley step.
inline double normal_inv_cdf(double u) {
    if (!(u > 0.0 && u < 1.0)) throw OutOfRange("normal_inv_cdf needs 0 < u < 1, got " + std::to_string(u));
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;
    double x;
    if (u < p_low) {
        const double q = std::sqrt(-2.0 * std::log(u));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (u <= 1.0 - p_low) {
        const double q = u - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-u));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Upper tail refinement uses the complementary CDF to keep precision.
    const double e = (u > 0.5) ? (0.5 * std::erfc(x / std::numbers::sqrt2) - (1.0 - u)) * -1.0
                               : 0.5 * std::erfc(-x / std::numbers::sqrt2) - u;
    const double pdf_inv = std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    const double step = e * pdf_inv;
    x -= step / (1.0 + 0.5 * x * step);
    return x;
}

inline constexpr int kDefaultHaltonSkip = 20;

/// P points of the terminal law plus their componentwise logs.
struct StateCloud {
    Matrix points;      ///< P x d, strictly positive
    Matrix log_points;  ///< log of `points`

    [[nodiscard]] int dim() const { return static_cast<int>(points.cols()); }
    [[nodiscard]] int size() const { return static_cast<int>(points.rows()); }
};

/// Quasi-random sample of S_T: point p is the (skip + p + 1)-th Halton vector
/// (bases = first d primes) pushed through Φ⁻¹ and the exact lognormal law.
inline StateCloud build_state_cloud(const BsParams &params, double maturity, int p_count,
                                    int skip = kDefaultHaltonSkip) {
    if (p_count < 2) throw InvalidArgument("state cloud needs at least 2 points");
    if (skip < 0) throw InvalidArgument("Halton skip must be non-negative");
    if (!(maturity > 0.0)) throw InvalidArgument("maturity must be positive");
    const int d = params.dim();
    const auto bases = first_primes(d);
    const Vector log_mean = params.spot().array().log().matrix() + params.log_drift() * maturity;
    const Vector scale = params.vols() * std::sqrt(maturity);
    const Matrix &sigma = params.chol().matrix();
    StateCloud cloud;
    cloud.log_points.resize(p_count, d);
    Vector g(d);
    for (int p = 0; p < p_count; ++p) {
        const auto index = static_cast<std::uint64_t>(skip) + static_cast<std::uint64_t>(p) + 1;
        for (int i = 0; i < d; ++i) g[i] = normal_inv_cdf(halton(index, bases[static_cast<std::size_t>(i)]));
        cloud.log_points.row(p) = (log_mean + scale.cwiseProduct(sigma * g)).transpose();
    }
    cloud.points = cloud.log_points.array().exp().matrix();
    return cloud;
}

/// Deterministic standard normals for (seed, stream).
///
/// Each stream owns an independent mt19937_64 seeded from (seed, stream), so
/// per-path streams can be generated in any order or in parallel. Uniforms are
/// mapped through normal_inv_cdf to keep results identical across platforms.
inline Vector gaussian_stream(std::uint64_t seed, std::uint64_t stream, Eigen::Index count) {
    if (count < 1) throw InvalidArgument("gaussian_stream count must be positive");
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32), 0x9e3779b9u};
    std::mt19937_64 gen(seq);
    Vector out(count);
    for (Eigen::Index i = 0; i < count; ++i) {
        const double u = (static_cast<double>(gen() >> 11) + 0.5) * 0x1.0p-53;
        out[i] = normal_inv_cdf(u);
    }
    return out;
}

inline Vector gaussian_stream(std::uint64_t seed, Eigen::Index count) { return gaussian_stream(seed, 0, count); }

}  // namespace gpra
