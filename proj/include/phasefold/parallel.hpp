#pragma once

#include <cstddef>
#include <functional>

namespace phasefold {

/// Environment variable that overrides the default worker count.
inline constexpr const char* kWorkersEnv = "PHASEFOLD_WORKERS";

/// `requested` if positive, else $PHASEFOLD_WORKERS, else hardware concurrency.
unsigned resolve_workers(unsigned requested = 0);

/// Splits [0, n) into contiguous chunks, one per worker, and runs
/// body(begin, end) on each. The first exception thrown by any chunk is
/// rethrown on the calling thread after all workers finish.
void parallel_for(std::size_t n, unsigned workers,
                  const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace phasefold
