#pragma once

#include <cstddef>
#include <functional>

namespace camaudit {

/// Number of worker threads used when a caller passes 0.
std::size_t default_thread_count();

/// Runs body(i) for i in [0, n) on up to `threads` workers. Each index is
/// visited exactly once; callers write results into per-index slots and
/// reduce afterwards so the reduction order never depends on scheduling.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& body);

}  // namespace camaudit
