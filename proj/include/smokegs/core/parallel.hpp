// Copyright Contributors to the Smoke-GS Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <thread>
#include <vector>

namespace smokegs {

/// Worker count resolution: explicit value if > 0, else SMOKEGS_WORKERS env
/// var, else 1. A single worker always runs inline on the calling thread.
int resolve_workers(int requested);

/// Static contiguous partition of [0, n) over `workers` threads. Each worker
/// w receives [w*n/W, (w+1)*n/W), so the item->worker assignment depends only
/// on (n, workers), never on scheduling. Callers that reduce must keep
/// per-worker accumulators and merge them in worker-index order.
void parallel_chunks(size_t n, int workers,
                     const std::function<void(int worker, size_t begin, size_t end)>& fn);

} // namespace smokegs
