#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qsched/types.hpp"

namespace qsched {

/// Static description of one DAG node. Run-time state (wait counters,
/// completion flags) lives in the scheduler, next to the records.
struct TaskRecord {
  int type = 0;
  TaskFlags flags = TaskFlags::none;
  std::size_t payload_offset = 0;
  std::size_t payload_size = 0;
  std::vector<TaskId> unlocks;
  std::vector<ResourceId> locks;
  std::vector<ResourceId> uses;
  std::int64_t cost = 0;
  std::int64_t weight = 0;

  [[nodiscard]] bool is_virtual() const { return has_flag(flags, TaskFlags::virtual_task); }
};

}  // namespace qsched
