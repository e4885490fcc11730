// Copyright 2026 The fusekit Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef FUSEKIT_PARALLEL_H_
#define FUSEKIT_PARALLEL_H_

#include <cstddef>
#include <functional>

namespace fusekit {

// Worker count: hardware concurrency, capped by FUSEKIT_THREADS when set.
std::size_t thread_count();

// Splits [0, n) into contiguous ranges and runs fn(begin, end) on each.
// Ranges below `grain` elements run inline. The first exception thrown by a
// worker is rethrown on the calling thread.
void parallel_for(std::size_t n, std::size_t grain,
                  const std::function<void(std::size_t, std::size_t)>& fn);

}  // namespace fusekit

#endif  // FUSEKIT_PARALLEL_H_
