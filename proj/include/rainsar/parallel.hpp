#pragma once

#include <cstddef>
#include <functional>

namespace rainsar {

/// Runs fn(i) for every i in [0, n) on up to `workers` threads. The first
/// exception thrown by a task is rethrown once all threads have stopped.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

/// RAINSAR_WORKERS, or 1 when unset or invalid.
int workers_from_env();

}  // namespace rainsar
