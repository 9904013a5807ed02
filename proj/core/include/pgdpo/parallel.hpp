#pragma once

#include <cstddef>
#include <functional>
#include <string>

namespace pgdpo {

/// Worker count from a request: values < 1 mean "all hardware threads".
int resolve_workers(int requested);

/// Splits [0, count) into at most `workers` contiguous chunks and runs body(begin, end)
/// on each, one thread per chunk. Chunk boundaries depend only on (count, workers).
/// The first exception thrown by any chunk is rethrown after all chunks finish.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace pgdpo
