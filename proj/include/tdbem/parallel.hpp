#pragma once

namespace tdbem {

/// Number of worker threads used by assembly loops.
/// Reads TDBEM_THREADS once; falls back to the OpenMP default.
int thread_count();

/// Overrides the thread count for subsequent parallel regions.
void set_thread_count(int n);

}  // namespace tdbem
