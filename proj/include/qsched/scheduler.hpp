#pragma once

#include <atomic>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <type_traits>
#include <vector>

#include "qsched/resource.hpp"
#include "qsched/task.hpp"
#include "qsched/task_queue.hpp"
#include "qsched/trace.hpp"
#include "qsched/types.hpp"

namespace qsched {

struct SchedulerConfig {
  IdlePolicy idle_policy = IdlePolicy::spin;
  // Hand a task's resources to the queue of the thread that fetched it.
  bool reown = false;
  std::uint64_t rng_seed = 0;
  std::size_t max_payload = 4096;
};

/// Execution function: task type tag and the payload bytes given to add_task.
using ExecFn = std::function<void(int type, std::span<const std::byte> payload)>;

/// Task graph, resources and per-thread queues, plus the executor that runs them.
///
/// Construction calls (add_*) are single-threaded. After start() the task
/// and resource records are read-mostly; only wait counters, lock flags, hold
/// counters and owners change, always through atomic read-modify-write.
class Scheduler {
 public:
  explicit Scheduler(int nr_queues, SchedulerConfig config = {});
  ~Scheduler();

  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  // Construction ------------------------------------------------------------

  /// Drops all tasks and resources; keeps the queues and allocated capacity.
  void reset();

  TaskId add_task(int type, TaskFlags flags, std::span<const std::byte> payload, std::int64_t cost);

  /// Copies a trivially copyable value in as the payload.
  template <typename T>
    requires std::is_trivially_copyable_v<T>
  TaskId add_task(int type, TaskFlags flags, const T& value, std::int64_t cost) {
    return add_task(type, flags, std::span<const std::byte>(std::as_bytes(std::span<const T, 1>(&value, 1))), cost);
  }

  ResourceId add_res(QueueId owner = kNoQueue, ResourceId parent = kNoResource);
  void add_lock(TaskId t, ResourceId r);
  void add_use(TaskId t, ResourceId r);
  /// `tb` depends on `ta`.
  void add_unlock(TaskId ta, TaskId tb);

  // Graph analysis ----------------------------------------------------------

  /// Sets every wait counter to the task's in-degree in the unlock graph.
  void compute_waits();
  /// Critical-path weights, cost plus the heaviest unlocked successor.
  /// Throws CyclicGraph naming a task on a cycle.
  void compute_weights();

  // Execution ---------------------------------------------------------------

  /// Sorts lock lists, computes waits and weights, and fills the queues.
  void start();
  /// Puts a ready task on the queue owning most of its resources.
  void enqueue(TaskId t);
  /// Fetches a task for queue `qid`, stealing from the others in random
  /// order on a local miss. Blocks until a task is available; returns
  /// nullopt once every task has completed.
  std::optional<TaskId> gettask(QueueId qid);
  /// Releases the task's locks and resolves the tasks it unlocks.
  void done(TaskId t);

  /// start() followed by `nr_threads` workers looping gettask -> fun -> done.
  RunReport run(int nr_threads, const ExecFn& fun);

  // Introspection -----------------------------------------------------------

  [[nodiscard]] int nr_queues() const { return static_cast<int>(queues_.size()); }
  [[nodiscard]] std::size_t task_count() const { return tasks_.size(); }
  [[nodiscard]] std::size_t resource_count() const { return resources_.size(); }
  [[nodiscard]] std::size_t unlock_count() const;
  [[nodiscard]] std::size_t lock_count() const;
  [[nodiscard]] std::size_t use_count() const;

  [[nodiscard]] std::span<const TaskRecord> tasks() const { return tasks_; }
  [[nodiscard]] const TaskRecord& task(TaskId t) const { return tasks_.at(t.index()); }
  [[nodiscard]] std::span<const std::byte> payload(TaskId t) const;
  [[nodiscard]] int wait(TaskId t) const;
  [[nodiscard]] std::int64_t weight(TaskId t) const { return tasks_.at(t.index()).weight; }
  [[nodiscard]] int waiting() const { return waiting_.load(); }
  [[nodiscard]] bool running() const { return running_.load(); }
  [[nodiscard]] const SchedulerConfig& config() const { return config_; }
  void set_reown(bool on) { config_.reown = on; }

  [[nodiscard]] ResourceTable& resources() { return resources_; }
  [[nodiscard]] const ResourceTable& resources() const { return resources_; }
  [[nodiscard]] TaskQueue& queue(QueueId q) { return *queues_.at(q.index()); }

  /// Worker threads spawned over the scheduler's lifetime.
  [[nodiscard]] std::size_t threads_launched() const { return threads_launched_; }

 private:
  using Rng = std::mt19937_64;
  struct WorkerStats;

  void check_constructing(const char* op) const;
  void check_task(TaskId t, const char* op) const;
  void check_resource(ResourceId r, const char* op) const;
  [[nodiscard]] TaskId find_cycle_member(std::span<const int> remaining_in) const;

  std::optional<TaskId> fetch(QueueId qid, Rng& rng, std::vector<int>& order);
  void resolve(TaskId t);
  void signal();
  void idle(std::uint64_t seen_epoch, int& backoff);
  void worker(int index, const ExecFn& fun, WorkerStats& stats, std::int64_t t0);

  SchedulerConfig config_;
  std::vector<TaskRecord> tasks_;
  std::vector<std::byte> payload_;
  ResourceTable resources_;
  std::vector<std::unique_ptr<TaskQueue>> queues_;

  std::unique_ptr<std::atomic<int>[]> waits_;
  std::unique_ptr<std::atomic<bool>[]> done_;
  std::size_t runtime_size_ = 0;
  std::size_t runtime_capacity_ = 0;
  std::vector<Rng> queue_rngs_;

  std::atomic<int> waiting_{0};
  std::atomic<bool> running_{false};
  std::atomic<bool> abort_{false};

  std::mutex park_mutex_;
  std::condition_variable park_cv_;
  std::atomic<std::uint64_t> epoch_{0};
  std::atomic<int> parked_{0};

  std::mutex error_mutex_;
  std::optional<TaskFailed> error_;
  std::size_t threads_launched_ = 0;
};

}  // namespace qsched
