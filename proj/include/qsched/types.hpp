#pragma once

#include <compare>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>

namespace qsched {

/// Dense integer handle. The tag keeps task, resource and queue ids apart.
template <typename Tag>
struct Id {
  std::int32_t value = -1;

  constexpr Id() = default;
  constexpr explicit Id(std::int32_t v) : value(v) {}

  [[nodiscard]] constexpr bool valid() const { return value >= 0; }
  [[nodiscard]] constexpr std::size_t index() const { return static_cast<std::size_t>(value); }

  friend constexpr auto operator<=>(Id, Id) = default;
};

using TaskId = Id<struct TaskTag>;
using ResourceId = Id<struct ResourceTag>;
using QueueId = Id<struct QueueTag>;

inline constexpr TaskId kNoTask{};
inline constexpr ResourceId kNoResource{};
inline constexpr QueueId kNoQueue{};

enum class TaskFlags : std::uint32_t {
  none = 0,
  // Groups dependencies only; never handed to the execution function.
  virtual_task = 1u << 0,
};

constexpr TaskFlags operator|(TaskFlags a, TaskFlags b) {
  return static_cast<TaskFlags>(static_cast<std::uint32_t>(a) | static_cast<std::uint32_t>(b));
}
constexpr bool has_flag(TaskFlags set, TaskFlags f) {
  return (static_cast<std::uint32_t>(set) & static_cast<std::uint32_t>(f)) != 0;
}

enum class IdlePolicy { spin, park };

// Errors --------------------------------------------------------------------

class InvalidArgument : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IllegalState : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Misuse of the hold/lock/done protocol (double release, double done, ...).
class ProtocolViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

class CyclicGraph : public std::runtime_error {
 public:
  explicit CyclicGraph(TaskId on_cycle)
      : std::runtime_error("task graph contains a cycle through task " +
                           std::to_string(on_cycle.value)),
        task_(on_cycle) {}
  [[nodiscard]] TaskId task() const { return task_; }

 private:
  TaskId task_;
};

/// Raised by run() when the execution function throws.
class TaskFailed : public std::runtime_error {
 public:
  TaskFailed(TaskId t, int type, const std::string& what)
      : std::runtime_error("task " + std::to_string(t.value) + " (type " + std::to_string(type) +
                           ") failed: " + what),
        task_(t) {}
  [[nodiscard]] TaskId task() const { return task_; }

 private:
  TaskId task_;
};

}  // namespace qsched

template <typename Tag>
struct std::hash<qsched::Id<Tag>> {
  std::size_t operator()(qsched::Id<Tag> id) const noexcept { return std::hash<std::int32_t>{}(id.value); }
};
