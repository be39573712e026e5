#pragma once

#include <cstddef>
#include <functional>

namespace nce {

/// Worker count: NCE_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
int thread_count();

/// Runs body(i) for i in [0, n) on up to thread_count() threads. Results must
/// be written to per-index slots; the first exception is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)> &body);

} // namespace nce
