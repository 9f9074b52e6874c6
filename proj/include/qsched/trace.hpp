#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "qsched/resource.hpp"
#include "qsched/task.hpp"
#include "qsched/types.hpp"

namespace qsched {

/// One executed task. Timestamps are monotonic nanoseconds from run start.
struct ExecutionRecord {
  TaskId task;
  int type = 0;
  int thread = 0;
  std::int64_t weight = 0;
  std::int64_t cost = 0;
  std::int64_t tic_ns = 0;
  std::int64_t toc_ns = 0;
};

struct RunReport {
  int nr_threads = 0;
  std::int64_t wall_ns = 0;
  std::int64_t start_ns = 0;
  /// Grouped by thread, in execution order within each thread.
  std::vector<ExecutionRecord> records;
  /// Per thread: time spent inside gettask.
  std::vector<std::int64_t> gettask_ns;
  /// Per thread: time spent inside the execution function.
  std::vector<std::int64_t> busy_ns;

  [[nodiscard]] std::int64_t total_gettask_ns() const;
  [[nodiscard]] std::int64_t total_busy_ns() const;
};

inline constexpr const char* kTraceHeader = "task,type,thread,weight,cost,tic_ns,toc_ns";

void write_trace_csv(std::ostream& os, std::span<const ExecutionRecord> records);
/// Throws std::runtime_error when the file cannot be written.
void write_trace_csv(const std::string& path, std::span<const ExecutionRecord> records);
/// Throws std::runtime_error on a malformed header or row.
std::vector<ExecutionRecord> read_trace_csv(std::istream& is);

struct TraceViolation {
  enum class Kind { dependency, conflict, missing, duplicate, virtual_executed, unknown_task, bad_interval };
  Kind kind;
  TaskId a;
  TaskId b;
};

struct TraceCheck {
  std::vector<TraceViolation> violations;
  [[nodiscard]] bool ok() const { return violations.empty(); }
  [[nodiscard]] std::size_t count(TraceViolation::Kind k) const;
};

/// Replays a trace against the graph: every dependency finishes before its
/// dependent starts (looking through virtual tasks), tasks whose locks are
/// equal or hierarchically related never overlap in time, and every
/// non-virtual task appears exactly once.
TraceCheck validate_trace(std::span<const ExecutionRecord> records, std::span<const TaskRecord> tasks,
                          const ResourceTable& resources);

std::string to_string(TraceViolation::Kind k);

}  // namespace qsched
