// Copyright 2026 The datg Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <thread>
#include <vector>

namespace datg {

/// Runs fn(i) for i in [0, count) on at most `limit` threads. Every index is
/// attempted; the exception from the lowest failing index is rethrown after
/// all workers finish. limit <= 1 runs inline on the calling thread.
template <class Fn>
void parallel_for(std::size_t count, std::size_t limit, Fn&& fn) {
  std::vector<std::exception_ptr> errors(count);
  if (limit <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    const std::size_t workers = std::min(limit, count);
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < count; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
          }
        }
      });
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace datg
