#pragma once

// Index-parallel loop bounded by DNCLAB_THREADS (unset or 0 = hardware concurrency).
// Each index writes its own slot, so results do not depend on the thread count.

#include "dnclab/types.hpp"

#include <exception>
#include <functional>

namespace dnclab {

unsigned thread_count();

/// Calls fn(i) for i in [0, n). Rethrows the exception of the lowest failing index.
void parallel_for(Index n, const std::function<void(Index)>& fn);

}  // namespace dnclab
