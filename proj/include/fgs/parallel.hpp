// Copyright Contributors to the fgs project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>

namespace fgs {

/// Number of workers used by parallel_for. Defaults to FGS_THREADS when set,
/// otherwise std::thread::hardware_concurrency().
std::size_t num_threads();
void set_num_threads(std::size_t n);

/// Runs body(begin, end) over contiguous chunks of [0, count). Chunks are
/// disjoint, so per-element work is deterministic regardless of the worker
/// count. Exceptions thrown by a chunk are rethrown on the calling thread.
void parallel_for(std::size_t count,
                  const std::function<void(std::size_t, std::size_t)> &body,
                  std::size_t min_chunk = 1);

} // namespace fgs
