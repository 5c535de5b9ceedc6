#pragma once

#include <cstddef>
#include <functional>

namespace mvbfa {

// Worker count: hardware concurrency, capped by the MVBFA_THREADS
// environment variable when it is set to a positive integer.
std::size_t workerCount();

// Runs body(i) for i in [0, count). Jobs are distributed over workerCount()
// threads; nested calls from inside a worker run serially on that worker.
// The first exception thrown by any job is rethrown after all workers join.
void parallelFor(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace mvbfa
