#pragma once

#include <atomic>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "qsched/resource.hpp"
#include "qsched/task.hpp"

namespace qsched {

/// Exclusive spin guard built on a single flag. No fairness.
class SpinGuard {
 public:
  void lock() noexcept;
  void unlock() noexcept { flag_.clear(std::memory_order_release); }

 private:
  std::atomic_flag flag_ = ATOMIC_FLAG_INIT;
};

/// Ready tasks of one thread, kept as a max-heap on task weight.
///
/// get() walks the heap array front to back as if it were sorted and hands
/// out the first task whose locks can all be taken. Entry k of n therefore
/// outweighs at least floor(n/k) - 1 others, which is all the ordering the
/// scan guarantees. The guard is held for the whole scan.
class TaskQueue {
 public:
  TaskQueue() = default;
  TaskQueue(const TaskQueue&) = delete;
  TaskQueue& operator=(const TaskQueue&) = delete;

  void reserve(std::size_t n);
  void clear();

  void put(TaskId t, std::span<const TaskRecord> tasks);

  template <typename Interleave>
  std::optional<TaskId> get(std::span<const TaskRecord> tasks, BasicResourceTable<Interleave>& res) {
    guard_.lock();
    std::size_t k = 0;
    for (; k < heap_.size(); ++k)
      if (res.try_lock_all(tasks[heap_[k].index()].locks)) break;
    std::optional<TaskId> out;
    if (k < heap_.size()) {
      out = heap_[k];
      heap_[k] = heap_.back();
      heap_.pop_back();
      if (k < heap_.size()) restore(k, tasks);
    }
    guard_.unlock();
    return out;
  }

  [[nodiscard]] std::size_t size() const;
  [[nodiscard]] bool empty() const { return size() == 0; }

  /// Copy of the heap array; only meaningful while no other thread touches the queue.
  [[nodiscard]] std::vector<TaskId> snapshot() const { return heap_; }

 private:
  void bubble_up(std::size_t k, std::span<const TaskRecord> tasks);
  void trickle_down(std::size_t k, std::span<const TaskRecord> tasks);
  void restore(std::size_t k, std::span<const TaskRecord> tasks);

  mutable SpinGuard guard_;
  std::vector<TaskId> heap_;
};

/// True iff `heap` satisfies the max-heap property on task weight.
bool is_max_heap(std::span<const TaskId> heap, std::span<const TaskRecord> tasks);

/// True iff, for every 1-based position k, entry k outweighs at least
/// floor(n/k) - 1 other entries.
bool satisfies_loose_ordering(std::span<const TaskId> heap, std::span<const TaskRecord> tasks);

}  // namespace qsched
