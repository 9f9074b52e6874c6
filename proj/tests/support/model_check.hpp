#pragma once

// Stateless interleaving explorer for two threads with sleep-set reduction.
//
// Code under test calls Baton::step(&atomic) before every atomic operation.
// Exactly one thread runs between two scheduling points: the thread that
// reaches one picks who goes next, following the current choice sequence,
// and keeps running when it picks itself. Choice sequences are enumerated
// depth-first, re-running the scenario from scratch for each one. Two steps
// on different atomics commute, so only one ordering of them is explored; a
// step without a location conflicts with everything. Every execution is
// covered up to reordering of commuting steps, which preserves final states
// and the states right before a location-free step.

#include <algorithm>
#include <array>
#include <bit>
#include <condition_variable>
#include <cstddef>
#include <functional>
#include <mutex>
#include <thread>
#include <vector>

namespace testing {

struct ExploreStats {
  std::size_t schedules = 0;
  // Runs cut short because every remaining choice was already covered.
  std::size_t redundant = 0;
  std::size_t max_steps = 0;
  // False when the schedule limit stopped the search early.
  bool complete = false;
};

struct Baton {
  static constexpr int kThreads = 2;
  enum State { running, waiting, finished };
  using Mask = unsigned;

  struct Node {
    Mask enabled = 0;
    Mask sleep = 0;
    Mask done = 0;
    int current = -1;
    std::array<const void*, kThreads> next{};
  };

  static inline std::mutex m;
  static inline std::condition_variable cv;
  static inline int granted = -1;
  static inline bool free_run = false;
  static inline bool all_done = false;
  static inline std::array<State, kThreads> state{};
  static inline std::array<const void*, kThreads> next{};
  static inline thread_local int me = -1;

  // Search state of the current run.
  static inline std::vector<Node> path;
  static inline std::size_t depth = 0;
  static inline bool redundant = false;
  static inline const std::function<void()>* check = nullptr;

  static Mask bit(int t) { return Mask(1) << t; }
  static bool conflict(const void* a, const void* b) { return a == nullptr || b == nullptr || a == b; }

  // Called with the mutex held once no thread is running.
  static void decide() {
    (*check)();
    Mask enabled = 0;
    for (int t = 0; t < kThreads; ++t)
      if (state[static_cast<std::size_t>(t)] == waiting) enabled |= bit(t);
    if (enabled == 0) {
      all_done = true;
      cv.notify_all();
      return;
    }
    if (depth == path.size()) {
      Node n;
      n.enabled = enabled;
      n.next = next;
      if (depth > 0) {
        const Node& up = path[depth - 1];
        const Mask asleep = (up.sleep | up.done) & ~bit(up.current);
        for (int u = 0; u < kThreads; ++u)
          if ((asleep & bit(u)) &&
              !conflict(up.next[static_cast<std::size_t>(u)], up.next[static_cast<std::size_t>(up.current)]))
            n.sleep |= bit(u);
        n.sleep &= enabled;
      }
      n.current = std::countr_zero(enabled & ~n.sleep);
      if (n.current >= kThreads) {
        // Every enabled thread is asleep: nothing new below this point.
        redundant = true;
        free_run = true;
        for (auto& s : state)
          if (s == waiting) s = running;
        cv.notify_all();
        return;
      }
      path.push_back(n);
    }
    const int t = path[depth].current;
    ++depth;
    state[static_cast<std::size_t>(t)] = running;
    granted = t;
    cv.notify_all();
  }

  static bool none_running() {
    return std::none_of(state.begin(), state.end(), [](State s) { return s == running; });
  }

  static void step(const void* location = nullptr) {
    if (me < 0) return;
    std::unique_lock lk(m);
    if (free_run) return;
    state[static_cast<std::size_t>(me)] = waiting;
    next[static_cast<std::size_t>(me)] = location;
    if (none_running()) decide();
    cv.wait(lk, [] { return granted == me || free_run; });
    if (!free_run) granted = -1;
  }

  static void finish() {
    std::lock_guard lk(m);
    state[static_cast<std::size_t>(me)] = finished;
    if (free_run) {
      if (std::all_of(state.begin(), state.end(), [](State s) { return s == finished; })) {
        all_done = true;
        cv.notify_all();
      }
      return;
    }
    if (none_running()) decide();
  }
};

// Runs the scenario under every interleaving class. `setup` resets shared
// state before a run; `body(tid)` is the per-thread script; `check()` is
// called at every scheduling point while all threads are parked;
// `final_check()` after both threads finish. The checks record failures
// themselves.
inline ExploreStats explore(const std::function<void()>& setup, const std::function<void(int)>& body,
                            const std::function<void()>& check, const std::function<void()>& final_check,
                            std::size_t schedule_limit = 10'000'000) {
  using B = Baton;
  ExploreStats stats;
  B::path.clear();
  B::check = &check;

  for (;;) {
    setup();
    {
      std::lock_guard lk(B::m);
      B::granted = -1;
      B::free_run = false;
      B::all_done = false;
      B::depth = 0;
      B::redundant = false;
      B::state.fill(B::running);
    }
    std::array<std::thread, B::kThreads> threads;
    for (int t = 0; t < B::kThreads; ++t)
      threads[static_cast<std::size_t>(t)] = std::thread([t, &body] {
        B::me = t;
        B::step();
        body(t);
        B::finish();
      });
    {
      std::unique_lock lk(B::m);
      B::cv.wait(lk, [] { return B::all_done; });
    }
    for (auto& th : threads) th.join();
    final_check();
    ++stats.schedules;
    if (B::redundant) ++stats.redundant;
    stats.max_steps = std::max(stats.max_steps, B::depth);

    auto& path = B::path;
    while (!path.empty()) {
      auto& n = path.back();
      n.done |= B::bit(n.current);
      const B::Mask avail = n.enabled & ~n.sleep & ~n.done;
      if (avail != 0) {
        n.current = std::countr_zero(avail);
        break;
      }
      path.pop_back();
    }
    if (path.empty()) {
      stats.complete = true;
      break;
    }
    if (stats.schedules >= schedule_limit) break;
  }
  B::check = nullptr;
  return stats;
}

}  // namespace testing
