#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "ssa/tensor.hpp"

namespace ssa {

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-4;
    /// Denominator floor of the relative error |a - n| / max(|a|, |n|, floor).
    double abs_floor = 1e-6;
    /// The floor is raised to roundoff_safety * eps * sum|r * f| / (step * tolerance),
    /// the size below which the central difference is dominated by rounding.
    double roundoff_safety = 10.0;
    /// Points whose one-sided differences disagree by more than
    /// kink_tolerance * max(1, |left|, |right|) are treated as kinks and skipped.
    double kink_tolerance = 1e-2;
    /// Probe at most this many elements per input (0 = all of them).
    std::size_t max_probes = 0;
    std::uint64_t seed = 1;
};

struct GradCheckReport {
    std::vector<double> max_rel_error;  // per input
    std::vector<std::size_t> probed;    // per input
    std::vector<std::size_t> kinks;     // per input, excluded points
    bool passed = false;
    std::string failure;  // set when the check itself could not run

    double worst() const;
    std::string summary() const;
};

/// Forward maps inputs to one output tensor. Backward receives the same inputs
/// plus dL/d(output) and returns dL/d(input) for each input.
using GradForward = std::function<TensorD(const std::vector<TensorD>&)>;
using GradBackward = std::function<std::vector<TensorD>(const std::vector<TensorD>&, const TensorD&)>;

/// Compares the analytic backward against central differences of the scalar
/// L = sum(r * forward(inputs)) for a fixed random projection r. Never throws.
GradCheckReport finite_difference_check(const GradForward& forward, const GradBackward& backward,
                                        const std::vector<TensorD>& inputs, const GradCheckOptions& options = {});

}  // namespace ssa
