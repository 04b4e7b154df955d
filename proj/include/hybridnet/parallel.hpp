#pragma once

#include <cstddef>
#include <functional>

namespace hybridnet {

// Number of worker threads used by parallel_for. Initialized from the
// HYBRIDNET_THREADS environment variable (default 1).
std::size_t thread_count();
void set_thread_count(std::size_t n);

// Runs task(i) for i in [0, num_tasks). Task boundaries are chosen by the
// caller from the data, never from the thread count, so every task performs
// the same floating-point operations in the same order regardless of how
// many workers execute them.
void parallel_for(std::size_t num_tasks, const std::function<void(std::size_t)>& task);

}  // namespace hybridnet
