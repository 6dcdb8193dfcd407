#pragma once

#include <cstddef>
#include <cstdint>

namespace qrbsde {

/// Worker count for path-parallel loops. Affects speed only: every loop
/// writes disjoint slots and reductions run serially in index order.
void set_thread_count(int threads);
int thread_count();

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    const auto count = static_cast<std::int64_t>(n);
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
}

}  // namespace qrbsde
