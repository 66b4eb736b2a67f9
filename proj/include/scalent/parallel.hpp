#pragma once

#include <cstddef>
#include <functional>

namespace scalent {

// Worker count used by parallel loops. 0 means hardware concurrency.
void set_thread_count(std::size_t threads);
std::size_t thread_count();

// Runs body(i) for i in [begin, end) interleaved across
// the configured workers. Bodies must write to disjoint locations; the
// result is then independent of the worker count.
void parallel_for(std::size_t begin, std::size_t end,
                  const std::function<void(std::size_t)>& body);

}  // namespace scalent
