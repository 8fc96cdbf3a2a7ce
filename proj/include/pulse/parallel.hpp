#pragma once

#include <cstddef>
#include <functional>

namespace pulse {

/// Worker count: PULSE_THREADS if set to a positive integer, otherwise the
/// hardware concurrency (at least 1).
std::size_t worker_count();

/// Runs body(i) for i in [0, n) on up to worker_count() threads. Items are
/// handed out in contiguous blocks; the first exception thrown by any body is
/// rethrown on the calling thread after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace pulse
