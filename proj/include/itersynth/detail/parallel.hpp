// Copyright 2026 The itersynth Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace itersynth::detail {

// Runs fn(i) for i in [0, n) on up to `bound` threads. Results land by index,
// so the output never depends on scheduling. The exception of the lowest
// failing index is rethrown after all workers finish.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t bound, Fn&& fn) {
  if (n == 0) return;
  const std::size_t workers = std::clamp<std::size_t>(bound, 1, n);
  std::vector<std::exception_ptr> errors(n);
  if (workers == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    {
      std::vector<std::jthread> pool;
      pool.reserve(workers);
      for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
          for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            try {
              fn(i);
            } catch (...) {
              errors[i] = std::current_exception();
            }
          }
        });
      }
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

template <typename R, typename Fn>
std::vector<R> parallel_map(std::size_t n, std::size_t bound, Fn&& fn) {
  std::vector<R> out(n);
  parallel_for(n, bound, [&](std::size_t i) { out[i] = fn(i); });
  return out;
}

}  // namespace itersynth::detail
