#pragma once

#include <string>
#include <vector>

#include "ssa/gradcheck.hpp"

namespace testutil {

struct GradCase {
    std::string name;
    ssa::GradForward forward;
    ssa::GradBackward backward;
    std::vector<ssa::TensorD> inputs;
    std::size_t max_probes = 0;
    double step = 1e-5;
};

/// One case per differentiable op (several for ops with variants).
std::vector<GradCase> op_grad_cases(std::uint64_t seed);

/// Separable convs, double-conv blocks, Shuffle Attention and CBAM, with
/// their parameters as extra inputs.
std::vector<GradCase> block_grad_cases(std::uint64_t seed);

/// Tiny SSA-UNet (widths 8..128) on a 32x32 input; parameters probed sparsely.
GradCase tiny_model_grad_case(std::uint64_t seed, std::size_t probes_per_tensor);

ssa::GradCheckReport run_case(const GradCase& c, double tolerance, std::uint64_t seed);

}  // namespace testutil
