#include "qsched/task_queue.hpp"

#include <thread>

namespace qsched {

void SpinGuard::lock() noexcept {
  int spins = 0;
  while (flag_.test_and_set(std::memory_order_acquire)) {
    while (flag_.test(std::memory_order_relaxed)) {
      if (++spins > 64) {
        std::this_thread::yield();
        spins = 0;
      }
    }
  }
}

void TaskQueue::reserve(std::size_t n) {
  guard_.lock();
  heap_.reserve(n);
  guard_.unlock();
}

void TaskQueue::clear() {
  guard_.lock();
  heap_.clear();
  guard_.unlock();
}

std::size_t TaskQueue::size() const {
  guard_.lock();
  const std::size_t n = heap_.size();
  guard_.unlock();
  return n;
}

void TaskQueue::put(TaskId t, std::span<const TaskRecord> tasks) {
  guard_.lock();
  heap_.push_back(t);
  bubble_up(heap_.size() - 1, tasks);
  guard_.unlock();
}

void TaskQueue::bubble_up(std::size_t k, std::span<const TaskRecord> tasks) {
  const TaskId t = heap_[k];
  const std::int64_t w = tasks[t.index()].weight;
  while (k > 0) {
    const std::size_t up = (k - 1) / 2;
    if (tasks[heap_[up].index()].weight >= w) break;
    heap_[k] = heap_[up];
    k = up;
  }
  heap_[k] = t;
}

void TaskQueue::trickle_down(std::size_t k, std::span<const TaskRecord> tasks) {
  const std::size_t n = heap_.size();
  const TaskId t = heap_[k];
  const std::int64_t w = tasks[t.index()].weight;
  for (;;) {
    std::size_t child = 2 * k + 1;
    if (child >= n) break;
    if (child + 1 < n && tasks[heap_[child + 1].index()].weight > tasks[heap_[child].index()].weight) ++child;
    if (w >= tasks[heap_[child].index()].weight) break;
    heap_[k] = heap_[child];
    k = child;
  }
  heap_[k] = t;
}

// The entry moved into slot k came from the end of the array, so it may
// need to travel in either direction.
void TaskQueue::restore(std::size_t k, std::span<const TaskRecord> tasks) {
  if (k > 0 && tasks[heap_[(k - 1) / 2].index()].weight < tasks[heap_[k].index()].weight)
    bubble_up(k, tasks);
  else
    trickle_down(k, tasks);
}

bool is_max_heap(std::span<const TaskId> heap, std::span<const TaskRecord> tasks) {
  for (std::size_t k = 0; k < heap.size(); ++k) {
    const auto w = tasks[heap[k].index()].weight;
    for (std::size_t c = 2 * k + 1; c <= 2 * k + 2 && c < heap.size(); ++c)
      if (tasks[heap[c].index()].weight > w) return false;
  }
  return true;
}

bool satisfies_loose_ordering(std::span<const TaskId> heap, std::span<const TaskRecord> tasks) {
  const std::size_t n = heap.size();
  for (std::size_t k = 1; k <= n; ++k) {
    const auto w = tasks[heap[k - 1].index()].weight;
    std::size_t below = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != k - 1 && tasks[heap[j].index()].weight <= w) ++below;
    const std::size_t bound = n / k;
    if (bound >= 1 && below < bound - 1) return false;
  }
  return true;
}

}  // namespace qsched
