#include "qsched/trace.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace qsched {

std::int64_t RunReport::total_gettask_ns() const {
  return std::accumulate(gettask_ns.begin(), gettask_ns.end(), std::int64_t{0});
}

std::int64_t RunReport::total_busy_ns() const {
  return std::accumulate(busy_ns.begin(), busy_ns.end(), std::int64_t{0});
}

void write_trace_csv(std::ostream& os, std::span<const ExecutionRecord> records) {
  os << kTraceHeader << '\n';
  for (const auto& r : records)
    os << r.task.value << ',' << r.type << ',' << r.thread << ',' << r.weight << ',' << r.cost << ','
       << r.tic_ns << ',' << r.toc_ns << '\n';
}

void write_trace_csv(const std::string& path, std::span<const ExecutionRecord> records) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open trace file '" + path + "' for writing");
  write_trace_csv(os, records);
  os.flush();
  if (!os) throw std::runtime_error("error writing trace file '" + path + "'");
}

std::vector<ExecutionRecord> read_trace_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTraceHeader)
    throw std::runtime_error("trace: missing or unexpected header");
  std::vector<ExecutionRecord> out;
  std::size_t lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream row(line);
    ExecutionRecord r;
    char c[6];
    std::int32_t task = -1;
    if (!(row >> task >> c[0] >> r.type >> c[1] >> r.thread >> c[2] >> r.weight >> c[3] >> r.cost >> c[4] >>
          r.tic_ns >> c[5] >> r.toc_ns) ||
        std::any_of(std::begin(c), std::end(c), [](char ch) { return ch != ','; }))
      throw std::runtime_error("trace: malformed row at line " + std::to_string(lineno));
    r.task = TaskId(task);
    out.push_back(r);
  }
  return out;
}

std::size_t TraceCheck::count(TraceViolation::Kind k) const {
  return static_cast<std::size_t>(
      std::ranges::count_if(violations, [k](const TraceViolation& v) { return v.kind == k; }));
}

std::string to_string(TraceViolation::Kind k) {
  switch (k) {
    case TraceViolation::Kind::dependency: return "dependency";
    case TraceViolation::Kind::conflict: return "conflict";
    case TraceViolation::Kind::missing: return "missing";
    case TraceViolation::Kind::duplicate: return "duplicate";
    case TraceViolation::Kind::virtual_executed: return "virtual_executed";
    case TraceViolation::Kind::unknown_task: return "unknown_task";
    case TraceViolation::Kind::bad_interval: return "bad_interval";
  }
  return "?";
}

TraceCheck validate_trace(std::span<const ExecutionRecord> records, std::span<const TaskRecord> tasks,
                          const ResourceTable& resources) {
  using Kind = TraceViolation::Kind;
  TraceCheck check;
  const std::size_t n = tasks.size();

  std::vector<const ExecutionRecord*> rec_of(n, nullptr);
  for (const auto& r : records) {
    if (!r.task.valid() || r.task.index() >= n) {
      check.violations.push_back({Kind::unknown_task, r.task, kNoTask});
      continue;
    }
    if (r.toc_ns < r.tic_ns) check.violations.push_back({Kind::bad_interval, r.task, kNoTask});
    if (tasks[r.task.index()].is_virtual()) check.violations.push_back({Kind::virtual_executed, r.task, kNoTask});
    if (rec_of[r.task.index()])
      check.violations.push_back({Kind::duplicate, r.task, kNoTask});
    else
      rec_of[r.task.index()] = &r;
  }
  for (std::size_t i = 0; i < n; ++i)
    if (!tasks[i].is_virtual() && !rec_of[i])
      check.violations.push_back({Kind::missing, TaskId(static_cast<std::int32_t>(i)), kNoTask});

  // Dependencies, looking through virtual tasks: a virtual task "finishes"
  // when the last of its predecessors does.
  std::vector<int> in(n, 0);
  for (const auto& t : tasks)
    for (TaskId u : t.unlocks) ++in[u.index()];
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < n; ++i)
    if (in[i] == 0) order.push_back(i);
  std::vector<std::int64_t> ready_at(n, 0);
  std::vector<TaskId> ready_from(n, kNoTask);
  for (std::size_t head = 0; head < order.size(); ++head) {
    const std::size_t i = order[head];
    const TaskId ti(static_cast<std::int32_t>(i));
    std::int64_t finish = ready_at[i];
    TaskId finisher = ready_from[i];
    if (!tasks[i].is_virtual() && rec_of[i]) {
      if (rec_of[i]->tic_ns < ready_at[i]) check.violations.push_back({Kind::dependency, ready_from[i], ti});
      finish = rec_of[i]->toc_ns;
      finisher = ti;
    }
    for (TaskId u : tasks[i].unlocks) {
      if (finish >= ready_at[u.index()]) {
        ready_at[u.index()] = finish;
        ready_from[u.index()] = finisher;
      }
      if (--in[u.index()] == 0) order.push_back(u.index());
    }
  }

  // Conflicts: a task locking r excludes every task locking r or anything
  // below r in the hierarchy. Gather, per resource, the tasks locking it
  // exactly and the tasks locking anything in its subtree.
  const std::size_t nr = resources.size();
  std::vector<std::vector<std::size_t>> exact(nr), subtree(nr);
  for (std::size_t i = 0; i < n; ++i) {
    if (!rec_of[i]) continue;
    for (ResourceId r : tasks[i].locks) {
      exact[r.index()].push_back(i);
      for (ResourceId up = r; up.valid(); up = resources.parent(up)) {
        auto& sub = subtree[up.index()];
        if (sub.empty() || sub.back() != i) sub.push_back(i);
      }
    }
  }
  for (std::size_t r = 0; r < nr; ++r) {
    if (exact[r].empty()) continue;
    auto& sub = subtree[r];
    std::ranges::sort(sub, [&](std::size_t a, std::size_t b) { return rec_of[a]->tic_ns < rec_of[b]->tic_ns; });
    sub.erase(std::unique(sub.begin(), sub.end()), sub.end());
    for (std::size_t a : exact[r]) {
      const auto* ra = rec_of[a];
      for (std::size_t b : sub) {
        const auto* rb = rec_of[b];
        if (rb->tic_ns >= ra->toc_ns) break;
        if (b != a && rb->toc_ns > ra->tic_ns && (a < b || std::ranges::find(exact[r], b) == exact[r].end()))
          check.violations.push_back({Kind::conflict, TaskId(static_cast<std::int32_t>(a)),
                                      TaskId(static_cast<std::int32_t>(b))});
      }
    }
  }
  return check;
}

}  // namespace qsched
