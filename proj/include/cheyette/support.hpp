#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <string>

namespace cheyette {

// Sums with a fixed pairwise reduction tree, independent of threading or
// chunk boundaries, so repeated runs reduce in the same order.
double pairwise_sum(std::span<const double> xs);

// Partitions [0, n) into contiguous chunks and runs chunk_fn(lo, hi) on worker
// threads. chunk_fn must only touch state indexed by its own range; results
// may not depend on execution order. Runs serially when n is small or the
// machine has a single hardware thread.
void parallel_for_chunks(std::size_t n,
                         const std::function<void(std::size_t, std::size_t)>& chunk_fn);

// Formats with 17 significant digits so the decimal text round-trips to the
// identical double.
std::string num17(double x);

}  // namespace cheyette
