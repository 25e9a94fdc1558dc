#pragma once

#include <functional>

namespace qcd {

// Number of hardware threads OpenMP would use (1 when built without it).
int available_workers();

// Runs fn(0..n-1) across an OpenMP thread pool with dynamic scheduling.
// workers <= 0 means use all available. Tasks must be independent; callers
// get deterministic output by seeding per index and writing to per-index
// slots, never by relying on execution order.
void for_each_index_parallel(long n, int workers, const std::function<void(long)>& fn);

// Serial reference with identical semantics, kept so tests can assert the
// parallel path changes nothing and benchmarks can measure the speedup.
void for_each_index_serial(long n, const std::function<void(long)>& fn);

}  // namespace qcd
