#pragma once

#include <cstddef>
#include <functional>

namespace wdse {

// Runs fn(i) for every i in [0, count) on up to `threads` workers.  Each call
// must write only to slots owned by its index, which keeps results identical
// for any thread count.  Exceptions propagate after all workers join.
void parallel_for_indexed(std::size_t count, int threads,
                          const std::function<void(std::size_t)>& fn);

}  // namespace wdse
