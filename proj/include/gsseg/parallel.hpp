#pragma once

#include <cstddef>
#include <functional>

namespace gsseg {

/// Worker count used by rendering and refinement. Defaults to the hardware concurrency.
void set_num_threads(int threads);
int num_threads();

/// Runs `body(index, worker)` for every index in [0, count). Indices are handed out
/// dynamically, so `body` must only write to per-index or per-worker state; `worker`
/// is in [0, num_threads()).
void parallel_for(std::size_t count, const std::function<void(std::size_t, int)>& body);

}  // namespace gsseg
