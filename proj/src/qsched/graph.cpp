// Graph construction and analysis half of the scheduler.

#include <algorithm>
#include <string>

#include "qsched/scheduler.hpp"

namespace qsched {

Scheduler::Scheduler(int nr_queues, SchedulerConfig config) : config_(config) {
  if (nr_queues < 1) throw InvalidArgument("sched_init: nr_queues must be >= 1, got " + std::to_string(nr_queues));
  queues_.reserve(static_cast<std::size_t>(nr_queues));
  for (int q = 0; q < nr_queues; ++q) queues_.push_back(std::make_unique<TaskQueue>());
}

Scheduler::~Scheduler() = default;

void Scheduler::check_constructing(const char* op) const {
  if (running_.load()) throw IllegalState(std::string(op) + ": scheduler is running");
}

void Scheduler::check_task(TaskId t, const char* op) const {
  if (!t.valid() || t.index() >= tasks_.size())
    throw InvalidArgument(std::string(op) + ": no task " + std::to_string(t.value));
}

void Scheduler::check_resource(ResourceId r, const char* op) const {
  if (!r.valid() || r.index() >= resources_.size())
    throw InvalidArgument(std::string(op) + ": no resource " + std::to_string(r.value));
}

void Scheduler::reset() {
  check_constructing("reset");
  tasks_.clear();
  payload_.clear();
  resources_.clear();
  for (auto& q : queues_) q->clear();
  waiting_.store(0);
}

TaskId Scheduler::add_task(int type, TaskFlags flags, std::span<const std::byte> payload, std::int64_t cost) {
  check_constructing("add_task");
  if (payload.size() > config_.max_payload)
    throw InvalidArgument("add_task: payload of " + std::to_string(payload.size()) + " bytes exceeds the " +
                          std::to_string(config_.max_payload) + "-byte limit");
  if (cost < 0) throw InvalidArgument("add_task: negative cost");
  TaskRecord rec;
  rec.type = type;
  rec.flags = flags;
  rec.payload_offset = payload_.size();
  rec.payload_size = payload.size();
  rec.cost = cost;
  payload_.insert(payload_.end(), payload.begin(), payload.end());
  tasks_.push_back(std::move(rec));
  return TaskId(static_cast<std::int32_t>(tasks_.size() - 1));
}

ResourceId Scheduler::add_res(QueueId owner, ResourceId parent) {
  check_constructing("add_res");
  if (owner.valid() && owner.value >= nr_queues())
    throw InvalidArgument("add_res: owner queue " + std::to_string(owner.value) + " does not exist");
  return resources_.add(owner.valid() ? owner : kNoQueue, parent);
}

void Scheduler::add_lock(TaskId t, ResourceId r) {
  check_constructing("add_lock");
  check_task(t, "add_lock");
  check_resource(r, "add_lock");
  auto& rec = tasks_[t.index()];
  if (rec.is_virtual()) throw InvalidArgument("add_lock: virtual tasks cannot lock resources");
  if (std::ranges::find(rec.locks, r) != rec.locks.end())
    throw InvalidArgument("add_lock: task " + std::to_string(t.value) + " already locks resource " +
                          std::to_string(r.value));
  // Holding a descendant blocks locking its ancestor, so such a task could never start.
  for (ResourceId held : rec.locks)
    if (resources_.is_ancestor_or_self(held, r) || resources_.is_ancestor_or_self(r, held))
      throw InvalidArgument("add_lock: resources " + std::to_string(held.value) + " and " +
                            std::to_string(r.value) + " are nested; a task cannot lock both");
  rec.locks.push_back(r);
}

void Scheduler::add_use(TaskId t, ResourceId r) {
  check_constructing("add_use");
  check_task(t, "add_use");
  check_resource(r, "add_use");
  auto& rec = tasks_[t.index()];
  if (rec.is_virtual()) throw InvalidArgument("add_use: virtual tasks cannot use resources");
  if (std::ranges::find(rec.uses, r) != rec.uses.end())
    throw InvalidArgument("add_use: task " + std::to_string(t.value) + " already uses resource " +
                          std::to_string(r.value));
  rec.uses.push_back(r);
}

void Scheduler::add_unlock(TaskId ta, TaskId tb) {
  check_constructing("add_unlock");
  check_task(ta, "add_unlock");
  check_task(tb, "add_unlock");
  if (ta == tb) throw InvalidArgument("add_unlock: a task cannot unlock itself");
  tasks_[ta.index()].unlocks.push_back(tb);
}

std::size_t Scheduler::unlock_count() const {
  std::size_t n = 0;
  for (const auto& t : tasks_) n += t.unlocks.size();
  return n;
}

std::size_t Scheduler::lock_count() const {
  std::size_t n = 0;
  for (const auto& t : tasks_) n += t.locks.size();
  return n;
}

std::size_t Scheduler::use_count() const {
  std::size_t n = 0;
  for (const auto& t : tasks_) n += t.uses.size();
  return n;
}

std::span<const std::byte> Scheduler::payload(TaskId t) const {
  const auto& rec = tasks_.at(t.index());
  return std::span<const std::byte>(payload_).subspan(rec.payload_offset, rec.payload_size);
}

int Scheduler::wait(TaskId t) const {
  if (t.index() >= runtime_size_) return 0;
  return waits_[t.index()].load();
}

void Scheduler::compute_waits() {
  const std::size_t n = tasks_.size();
  if (runtime_capacity_ < n || !waits_) {
    waits_ = std::make_unique<std::atomic<int>[]>(n);
    done_ = std::make_unique<std::atomic<bool>[]>(n);
    runtime_capacity_ = n;
  }
  runtime_size_ = n;
  for (std::size_t i = 0; i < n; ++i) waits_[i].store(0, std::memory_order_relaxed);
  for (const auto& t : tasks_)
    for (TaskId u : t.unlocks) waits_[u.index()].fetch_add(1, std::memory_order_relaxed);
}

void Scheduler::compute_weights() {
  const std::size_t n = tasks_.size();
  std::vector<int> in(n, 0);
  for (const auto& t : tasks_)
    for (TaskId u : t.unlocks) ++in[u.index()];

  // Kahn's algorithm gives a topological order; weights fill in reverse.
  std::vector<TaskId> order;
  order.reserve(n);
  for (std::size_t i = 0; i < n; ++i)
    if (in[i] == 0) order.emplace_back(static_cast<std::int32_t>(i));
  for (std::size_t head = 0; head < order.size(); ++head)
    for (TaskId u : tasks_[order[head].index()].unlocks)
      if (--in[u.index()] == 0) order.push_back(u);

  if (order.size() != n) throw CyclicGraph(find_cycle_member(in));

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    auto& rec = tasks_[it->index()];
    std::int64_t heaviest = 0;
    for (TaskId u : rec.unlocks) heaviest = std::max(heaviest, tasks_[u.index()].weight);
    rec.weight = rec.cost + heaviest;
  }
}

// Every task Kahn could not reach still has a remaining predecessor, so
// walking predecessors must revisit a task, and that task lies on a cycle.
TaskId Scheduler::find_cycle_member(std::span<const int> remaining_in) const {
  const std::size_t n = tasks_.size();
  std::vector<TaskId> pred(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (remaining_in[i] == 0) continue;
    for (TaskId u : tasks_[i].unlocks)
      if (remaining_in[u.index()] > 0) pred[u.index()] = TaskId(static_cast<std::int32_t>(i));
  }
  std::size_t start = 0;
  while (remaining_in[start] == 0) ++start;
  std::vector<bool> seen(n, false);
  TaskId t(static_cast<std::int32_t>(start));
  while (!seen[t.index()]) {
    seen[t.index()] = true;
    t = pred[t.index()];
  }
  return t;
}

}  // namespace qsched
