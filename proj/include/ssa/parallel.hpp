#pragma once

#include <cstddef>
#include <functional>

namespace ssa {

/// Worker count used by the kernels: hardware concurrency, capped by the
/// SSA_THREADS environment variable, unless overridden with set_num_threads.
std::size_t num_threads();
void set_num_threads(std::size_t n);

/// Runs fn(i) for i in [0, count). Each index is processed by exactly one
/// thread, so results never depend on how the range is split.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& fn);

}  // namespace ssa
