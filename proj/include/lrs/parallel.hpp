#pragma once

#include <cstddef>
#include <functional>

namespace lrs {

/// Worker count from LRS_THREADS (0 or unset means hardware concurrency).
std::size_t worker_count();

/// Runs body(i) for i in [0, n) across worker_count() threads.
///
/// Callers write results into per-index slots and reduce in index order,
/// which keeps every output independent of the thread count.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

} // namespace lrs
