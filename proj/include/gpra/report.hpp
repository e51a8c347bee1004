#pragma once

#include <chrono>
#include <string>
#include <vector>

#include "gpra/gpr.hpp"

namespace gpra {

/// Hyperparameters of the surrogate fitted at one backward step.
struct StepDiagnostics {
    int step = 0;
    double signal_std = 0.0;
    std::vector<double> length_scales;
    double noise_var = 0.0;
    double log_likelihood = 0.0;
    std::vector<std::string> warnings;

    static StepDiagnostics from(int step, const GprModel &model) {
        StepDiagnostics s;
        s.step = step;
        s.signal_std = model.kernel.signal_std;
        s.length_scales.assign(model.kernel.length_scales.data(),
                               model.kernel.length_scales.data() + model.kernel.length_scales.size());
        s.noise_var = model.noise_var;
        s.log_likelihood = model.log_likelihood;
        if (model.jitter_escalations > 0) {
            s.warnings.emplace_back("jitter escalated x" + std::to_string(model.jitter_escalations));
        }
        return s;
    }
};

struct PriceReport {
    std::string method;
    double price = 0.0;
    double seconds = 0.0;
    std::vector<StepDiagnostics> steps;
};

class Stopwatch {
public:
    Stopwatch() : start_(std::chrono::steady_clock::now()) {}
    [[nodiscard]] double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }

private:
    std::chrono::steady_clock::time_point start_;
};

}  // namespace gpra
