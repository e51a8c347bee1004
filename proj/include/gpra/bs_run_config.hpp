#pragma once

#include "gpra/errors.hpp"
#include "gpra/gpr.hpp"
#include "gpra/sampling.hpp"

namespace gpra {

/// Lower bound on the surrogate noise variance, relative to var(y), used by
/// the pricers. Value functions have kinks at the exercise boundary; a small
/// fitted nugget keeps the surrogate from oscillating around them.
inline constexpr double kSurrogateNoiseFloor = 1e-3;

/// Discretization and fitting controls of a Black-Scholes Bermudan run.
struct BsRunConfig {
    double maturity = 1.0;
    int n_steps = 10;
    int p_count = 1000;
    int halton_skip = kDefaultHaltonSkip;
    int fit_restarts = 5;
    double noise_floor = kSurrogateNoiseFloor;
    bool estimate_noise = true;
    int max_evals_per_start = 0;

    void validate() const {
        if (!(maturity > 0.0)) throw InvalidArgument("maturity must be positive");
        if (n_steps < 1) throw InvalidArgument("need at least one exercise date");
        if (p_count < 2) throw InvalidArgument("need at least two cloud points");
        if (!(noise_floor > 0.0)) throw InvalidArgument("noise floor must be positive");
    }

    [[nodiscard]] FitOptions fit_options() const {
        FitOptions opts;
        opts.restarts = fit_restarts;
        opts.jitter = noise_floor;
        opts.estimate_noise = estimate_noise;
        opts.max_evals_per_start = max_evals_per_start;
        return opts;
    }
};

}  // namespace gpra
