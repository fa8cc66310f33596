#pragma once

// Deterministic parallel helpers: work is partitioned by index, never by
// thread, so results do not depend on the worker count.

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>
#include <utility>
#include <vector>

namespace ddu {

inline std::size_t resolve_workers(std::size_t requested) {
  if (requested > 0) return requested;
  const auto hw = std::thread::hardware_concurrency();
  return hw ? hw : 1;
}

/// Calls fn(i) for i in [0, n) on up to `workers` threads. If any call throws,
/// the exception from the lowest index is rethrown after all threads join.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::min(resolve_workers(workers), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex err_mutex;
  std::size_t err_index = n;
  std::exception_ptr err;
  auto body = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(err_mutex);
        if (i < err_index) {
          err_index = i;
          err = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (std::size_t t = 0; t < workers; ++t) threads.emplace_back(body);
  for (auto& t : threads) t.join();
  if (err) std::rethrow_exception(err);
}

/// Streaming pairwise reduction whose tree shape depends only on the number
/// of leaves pushed: leaf k merges with its sibling exactly as in a balanced
/// binary tree over leaf indices. Memory is O(log n) partial results.
template <class T, class Merge>
class PairwiseReducer {
 public:
  explicit PairwiseReducer(Merge merge) : merge_(std::move(merge)) {}

  void push(T leaf) {
    std::size_t level = 0;
    T cur = std::move(leaf);
    while (!stack_.empty() && stack_.back().first == level) {
      cur = merge_(std::move(stack_.back().second), std::move(cur));
      stack_.pop_back();
      ++level;
    }
    stack_.emplace_back(level, std::move(cur));
  }

  std::optional<T> finish() {
    if (stack_.empty()) return std::nullopt;
    T acc = std::move(stack_.back().second);
    stack_.pop_back();
    while (!stack_.empty()) {
      acc = merge_(std::move(stack_.back().second), std::move(acc));
      stack_.pop_back();
    }
    return acc;
  }

 private:
  Merge merge_;
  std::vector<std::pair<std::size_t, T>> stack_;
};

}  // namespace ddu
