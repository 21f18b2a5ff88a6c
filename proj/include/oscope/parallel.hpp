#pragma once

#include <cstddef>
#include <functional>

namespace oscope {

/// Worker count: OSCOPE_THREADS if set (>= 1), else hardware concurrency.
std::size_t thread_count();

/// Overrides the worker count for the current process (0 restores the default).
void set_thread_count(std::size_t n);

/// Calls `body(begin, end)` over disjoint chunks of [0, n). Chunk boundaries
/// depend only on `n` and `grain`, never on the worker count, so callers that
/// write results into per-index slots get thread-count independent output.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace oscope
