// Execution half of the scheduler: start, enqueue, gettask, done and run.

#include <algorithm>
#include <chrono>
#include <exception>
#include <numeric>
#include <thread>

#include "qsched/scheduler.hpp"

#if defined(__x86_64__) || defined(__i386__)
#include <immintrin.h>
#endif

namespace qsched {

namespace {

using Clock = std::chrono::steady_clock;

std::int64_t now_ns() {
  return std::chrono::duration_cast<std::chrono::nanoseconds>(Clock::now().time_since_epoch()).count();
}

inline void cpu_relax() {
#if defined(__x86_64__) || defined(__i386__)
  _mm_pause();
#else
  std::this_thread::yield();
#endif
}

constexpr int kMaxBackoff = 64;

}  // namespace

struct Scheduler::WorkerStats {
  std::vector<ExecutionRecord> records;
  std::int64_t gettask_ns = 0;
  std::int64_t busy_ns = 0;
};

void Scheduler::start() {
  if (running_.load()) throw IllegalState("start: scheduler is running");
  for (auto& t : tasks_) std::ranges::sort(t.locks);
  compute_waits();
  compute_weights();

  const std::size_t n = tasks_.size();
  for (std::size_t i = 0; i < n; ++i) done_[i].store(false, std::memory_order_relaxed);
  resources_.reset_state();
  for (auto& q : queues_) {
    q->clear();
    q->reserve(n);
  }
  queue_rngs_.clear();
  for (int q = 0; q < nr_queues(); ++q)
    queue_rngs_.emplace_back(config_.rng_seed ^ static_cast<std::uint64_t>(q));
  abort_.store(false);
  error_.reset();
  waiting_.store(static_cast<int>(n));

  // Collect first: resolving a virtual root drops later counters to zero.
  std::vector<TaskId> ready;
  for (std::size_t i = 0; i < n; ++i)
    if (waits_[i].load(std::memory_order_relaxed) == 0) ready.emplace_back(static_cast<std::int32_t>(i));
  for (TaskId t : ready) {
    if (tasks_[t.index()].is_virtual())
      resolve(t);
    else
      enqueue(t);
  }
}

void Scheduler::enqueue(TaskId t) {
  const auto& rec = tasks_[t.index()];
  thread_local std::vector<int> score;
  score.assign(queues_.size(), 0);
  auto tally = [&](ResourceId r) {
    const int owner = resources_.owner(r).value;
    if (owner >= 0 && owner < nr_queues()) ++score[static_cast<std::size_t>(owner)];
  };
  for (ResourceId r : rec.locks) tally(r);
  for (ResourceId r : rec.uses) tally(r);
  std::size_t best = 0;
  for (std::size_t q = 1; q < score.size(); ++q)
    if (score[q] > score[best]) best = q;
  queues_[best]->put(t, tasks_);
  signal();
}

std::optional<TaskId> Scheduler::fetch(QueueId qid, Rng& rng, std::vector<int>& order) {
  auto t = queues_[qid.index()]->get(tasks_, resources_);
  if (!t && queues_.size() > 1) {
    order.clear();
    for (int q = 0; q < nr_queues(); ++q)
      if (q != qid.value) order.push_back(q);
    std::shuffle(order.begin(), order.end(), rng);
    for (int q : order)
      if ((t = queues_[static_cast<std::size_t>(q)]->get(tasks_, resources_))) break;
  }
  if (t && config_.reown) {
    const auto& rec = tasks_[t->index()];
    for (ResourceId r : rec.locks) resources_.set_owner(r, qid);
    for (ResourceId r : rec.uses) resources_.set_owner(r, qid);
  }
  return t;
}

std::optional<TaskId> Scheduler::gettask(QueueId qid) {
  if (!qid.valid() || qid.value >= nr_queues()) throw InvalidArgument("gettask: no such queue");
  if (queue_rngs_.size() != queues_.size()) {
    queue_rngs_.clear();
    for (int q = 0; q < nr_queues(); ++q)
      queue_rngs_.emplace_back(config_.rng_seed ^ static_cast<std::uint64_t>(q));
  }
  std::vector<int> order;
  int backoff = 1;
  while (waiting_.load(std::memory_order_acquire) > 0 && !abort_.load(std::memory_order_relaxed)) {
    const std::uint64_t epoch = epoch_.load();
    if (auto t = fetch(qid, queue_rngs_[qid.index()], order)) return t;
    idle(epoch, backoff);
  }
  return std::nullopt;
}

void Scheduler::idle(std::uint64_t seen_epoch, int& backoff) {
  if (config_.idle_policy == IdlePolicy::park) {
    std::unique_lock lk(park_mutex_);
    parked_.fetch_add(1);
    park_cv_.wait(lk, [&] {
      return epoch_.load() != seen_epoch || waiting_.load() == 0 || abort_.load();
    });
    parked_.fetch_sub(1);
    return;
  }
  for (int i = 0; i < backoff; ++i) cpu_relax();
  if (backoff >= kMaxBackoff)
    std::this_thread::yield();
  else
    backoff *= 2;
}

// Bumps the epoch so parked threads re-scan. Called after every enqueue,
// every resource release and when the last task completes.
void Scheduler::signal() {
  epoch_.fetch_add(1);
  if (parked_.load() > 0) {
    std::lock_guard lk(park_mutex_);
    park_cv_.notify_all();
  }
}

// Completes `t` without touching its locks: dependents whose wait counter
// drops to zero are enqueued, or resolved inline when virtual. The waiting
// counter of `t` itself is decremented last.
void Scheduler::resolve(TaskId t) {
  std::vector<TaskId> virtuals;
  auto release_dependents = [&](TaskId from) {
    for (TaskId u : tasks_[from.index()].unlocks) {
      const int before = waits_[u.index()].fetch_sub(1, std::memory_order_acq_rel);
      if (before <= 0)
        throw ProtocolViolation("done: wait counter underflow on task " + std::to_string(u.value));
      if (before != 1) continue;
      if (tasks_[u.index()].is_virtual())
        virtuals.push_back(u);
      else
        enqueue(u);
    }
  };
  release_dependents(t);
  while (!virtuals.empty()) {
    const TaskId v = virtuals.back();
    virtuals.pop_back();
    done_[v.index()].store(true, std::memory_order_relaxed);
    release_dependents(v);
    waiting_.fetch_sub(1, std::memory_order_acq_rel);
  }
  done_[t.index()].store(true, std::memory_order_relaxed);
  if (waiting_.fetch_sub(1, std::memory_order_acq_rel) == 1) signal();
}

void Scheduler::done(TaskId t) {
  check_task(t, "done");
  if (t.index() >= runtime_size_) throw IllegalState("done: scheduler not started");
  if (done_[t.index()].load(std::memory_order_relaxed))
    throw ProtocolViolation("done: task " + std::to_string(t.value) + " already completed");
  const auto& rec = tasks_[t.index()];
  for (ResourceId r : rec.locks) resources_.unlock(r);
  if (!rec.locks.empty()) signal();
  resolve(t);
}

void Scheduler::worker(int index, const ExecFn& fun, WorkerStats& stats, std::int64_t t0) {
  const QueueId qid(index % nr_queues());
  Rng rng(config_.rng_seed ^ static_cast<std::uint64_t>(index));
  std::vector<int> order;
  int backoff = 1;
  for (;;) {
    const std::int64_t g0 = now_ns();
    std::optional<TaskId> got;
    while (waiting_.load(std::memory_order_acquire) > 0 && !abort_.load(std::memory_order_relaxed)) {
      const std::uint64_t epoch = epoch_.load();
      if ((got = fetch(qid, rng, order))) break;
      idle(epoch, backoff);
    }
    backoff = 1;
    const std::int64_t tic = now_ns();
    stats.gettask_ns += tic - g0;
    if (!got) return;

    const TaskId t = *got;
    const auto& rec = tasks_[t.index()];
    try {
      fun(rec.type, payload(t));
    } catch (const std::exception& e) {
      std::lock_guard lk(error_mutex_);
      if (!error_) error_.emplace(t, rec.type, e.what());
      abort_.store(true);
      signal();
      return;
    } catch (...) {
      std::lock_guard lk(error_mutex_);
      if (!error_) error_.emplace(t, rec.type, "unknown exception");
      abort_.store(true);
      signal();
      return;
    }
    const std::int64_t toc = now_ns();
    stats.busy_ns += toc - tic;
    stats.records.push_back({t, rec.type, index, rec.weight, rec.cost, tic - t0, toc - t0});
    done(t);
  }
}

RunReport Scheduler::run(int nr_threads, const ExecFn& fun) {
  if (nr_threads < 1) throw InvalidArgument("run: nr_threads must be >= 1");
  const std::int64_t t0 = now_ns();
  start();
  running_.store(true);
  RunReport report;
  report.nr_threads = nr_threads;
  report.start_ns = now_ns() - t0;

  std::vector<WorkerStats> stats(static_cast<std::size_t>(nr_threads));
  if (waiting_.load() > 0) {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(nr_threads));
    for (int i = 0; i < nr_threads; ++i) {
      threads.emplace_back([this, i, &fun, &stats, t0] { worker(i, fun, stats[static_cast<std::size_t>(i)], t0); });
      ++threads_launched_;
    }
    for (auto& th : threads) th.join();
  }
  running_.store(false);
  report.wall_ns = now_ns() - t0;

  if (error_) {
    TaskFailed err = *error_;
    error_.reset();
    throw err;
  }
  for (auto& s : stats) {
    report.records.insert(report.records.end(), s.records.begin(), s.records.end());
    report.gettask_ns.push_back(s.gettask_ns);
    report.busy_ns.push_back(s.busy_ns);
  }
  return report;
}

}  // namespace qsched
