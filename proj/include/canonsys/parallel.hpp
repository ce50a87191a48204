#pragma once

#include <cstddef>
#include <functional>

namespace canonsys {

// Worker count: CANONSYS_THREADS if set, else hardware concurrency (at least 1).
std::size_t worker_count();

// Runs body(i) for i in [0, n) on the worker pool. Exceptions from body are
// rethrown on the calling thread (the one with the smallest index wins).
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace canonsys
