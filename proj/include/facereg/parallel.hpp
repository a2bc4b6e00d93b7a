#pragma once

#include <cstddef>
#include <functional>

namespace facereg {

/// Caps the number of worker threads used inside library calls. 0 restores
/// the default (hardware concurrency). Results never depend on this value.
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs fn(i) for every i in [begin, end) split into contiguous chunks.
/// fn must only write to per-index state; any reduction happens afterwards
/// in index order on the calling thread.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& fn);

}  // namespace facereg
