/*
 * Copyright 2026 The cone-infer Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cstdint>
#include <exception>
#include <functional>
#include <random>
#include <thread>
#include <vector>

namespace coneinfer {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Independent generator for substream `stream` of `seed`. Replicate k of any
// simulation always draws from substream k, whatever the worker count.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(splitmix64(seed)),
                      static_cast<std::uint32_t>(splitmix64(seed) >> 32),
                      static_cast<std::uint32_t>(splitmix64(stream ^ 0xA5A5A5A5DEADBEEFULL)),
                      static_cast<std::uint32_t>(splitmix64(stream ^ 0xA5A5A5A5DEADBEEFULL) >> 32)};
    return std::mt19937_64(seq);
}

// Runs body(task) for task in [0, n_tasks) on up to `jobs` threads. Tasks are
// claimed in index order; callers write results into per-task slots so the
// merge order never depends on scheduling.
inline void parallel_for(int n_tasks, int jobs, const std::function<void(int)>& body) {
    jobs = std::max(1, std::min(jobs, n_tasks));
    if (jobs == 1) {
        for (int t = 0; t < n_tasks; ++t) body(t);
        return;
    }
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(jobs);
    workers.reserve(jobs);
    for (int w = 0; w < jobs; ++w) {
        workers.emplace_back([&, w] {
            try {
                for (int t = w; t < n_tasks; t += jobs) body(t);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& th : workers) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

}  // namespace coneinfer
