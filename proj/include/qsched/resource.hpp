#pragma once

#include <atomic>
#include <cstddef>
#include <span>
#include <vector>

#include "qsched/types.hpp"

namespace qsched {

/// A lockable unit. `hold` counts locked descendants; a held resource cannot
/// be locked, and a locked resource cannot be held.
struct ResourceRecord {
  ResourceId parent;
  std::atomic<int> lock{0};
  std::atomic<int> hold{0};
  std::atomic<int> owner{-1};

  ResourceRecord() = default;
  ResourceRecord(ResourceId p, QueueId o) : parent(p), owner(o.value) {}

  // Copies only happen while the table grows during single-threaded construction.
  ResourceRecord(const ResourceRecord& other)
      : parent(other.parent),
        lock(other.lock.load(std::memory_order_relaxed)),
        hold(other.hold.load(std::memory_order_relaxed)),
        owner(other.owner.load(std::memory_order_relaxed)) {}
  ResourceRecord& operator=(const ResourceRecord& other) {
    parent = other.parent;
    lock.store(other.lock.load(std::memory_order_relaxed), std::memory_order_relaxed);
    hold.store(other.hold.load(std::memory_order_relaxed), std::memory_order_relaxed);
    owner.store(other.owner.load(std::memory_order_relaxed), std::memory_order_relaxed);
    return *this;
  }
};

/// Default synchronization hooks: nothing happens between atomic steps.
struct NoInterleave {
  static void step(const void* /*location*/) {}
};

/// Hierarchical resources and the hold/lock protocol.
///
/// Every atomic step of the protocol is preceded by `Interleave::step(&atomic)`,
/// naming the atomic it is about to touch, which lets the model-checking tests drive the exact production code
/// through chosen interleavings. Locking acquires ancestors child-to-root and
/// releases them in the reverse order.
///
/// The lock flag is acquired with acquire ordering and cleared with release
/// ordering, so writes made while a resource is locked are visible to the
/// next thread that locks it.
template <typename Interleave = NoInterleave>
class BasicResourceTable {
 public:
  ResourceId add(QueueId owner, ResourceId parent) {
    if (parent.valid() && parent.index() >= records_.size())
      throw InvalidArgument("add_res: parent resource " + std::to_string(parent.value) + " does not exist");
    if (parent.value < -1) throw InvalidArgument("add_res: malformed parent id");
    records_.emplace_back(parent, owner);
    return ResourceId(static_cast<std::int32_t>(records_.size() - 1));
  }

  void clear() { records_.clear(); }

  [[nodiscard]] std::size_t size() const { return records_.size(); }
  [[nodiscard]] bool empty() const { return records_.empty(); }

  [[nodiscard]] const ResourceRecord& operator[](ResourceId r) const { return records_[r.index()]; }
  [[nodiscard]] ResourceRecord& operator[](ResourceId r) { return records_[r.index()]; }

  [[nodiscard]] ResourceId parent(ResourceId r) const { return records_[r.index()].parent; }
  [[nodiscard]] int hold_count(ResourceId r) const { return records_[r.index()].hold.load(); }
  [[nodiscard]] bool is_locked(ResourceId r) const { return records_[r.index()].lock.load() != 0; }
  [[nodiscard]] QueueId owner(ResourceId r) const {
    return QueueId(records_[r.index()].owner.load(std::memory_order_relaxed));
  }
  void set_owner(ResourceId r, QueueId q) {
    records_[r.index()].owner.store(q.value, std::memory_order_relaxed);
  }

  /// True iff `anc` is `r` or lies on `r`'s parent chain.
  [[nodiscard]] bool is_ancestor_or_self(ResourceId anc, ResourceId r) const {
    for (ResourceId up = r; up.valid(); up = parent(up))
      if (up == anc) return true;
    return false;
  }

  /// Clears all lock flags and hold counters. Not thread safe.
  void reset_state() {
    for (auto& rec : records_) {
      rec.lock.store(0, std::memory_order_relaxed);
      rec.hold.store(0, std::memory_order_relaxed);
    }
  }

  bool try_hold(ResourceId r) {
    auto& rec = records_[r.index()];
    int expected = 0;
    Interleave::step(&rec.lock);
    if (!rec.lock.compare_exchange_strong(expected, 1, std::memory_order_acquire)) return false;
    Interleave::step(&rec.hold);
    rec.hold.fetch_add(1, std::memory_order_relaxed);
    Interleave::step(&rec.lock);
    rec.lock.store(0, std::memory_order_release);
    return true;
  }

  void release_hold(ResourceId r) {
    auto& rec = records_[r.index()];
    Interleave::step(&rec.hold);
    if (rec.hold.fetch_sub(1, std::memory_order_acq_rel) <= 0) {
      rec.hold.fetch_add(1, std::memory_order_relaxed);
      throw ProtocolViolation("release_hold: hold counter underflow on resource " + std::to_string(r.value));
    }
  }

  bool try_lock(ResourceId r) {
    auto& rec = records_[r.index()];
    int expected = 0;
    Interleave::step(&rec.lock);
    if (!rec.lock.compare_exchange_strong(expected, 1, std::memory_order_acquire)) return false;
    // A concurrent try_hold may have bumped the counter just before we took the flag.
    Interleave::step(&rec.hold);
    if (rec.hold.load(std::memory_order_acquire) != 0) {
      Interleave::step(&rec.lock);
      rec.lock.store(0, std::memory_order_release);
      return false;
    }
    ResourceId up = rec.parent;
    for (; up.valid(); up = parent(up))
      if (!try_hold(up)) break;
    if (up.valid()) {
      const ResourceId top = up;
      for (up = rec.parent; up != top; up = parent(up)) release_hold(up);
      Interleave::step(&rec.lock);
      rec.lock.store(0, std::memory_order_release);
      return false;
    }
    return true;
  }

  void unlock(ResourceId r) {
    auto& rec = records_[r.index()];
    Interleave::step(&rec.lock);
    if (rec.lock.load(std::memory_order_relaxed) == 0)
      throw ProtocolViolation("unlock: resource " + std::to_string(r.value) + " is not locked");
    for (ResourceId up = rec.parent; up.valid(); up = parent(up)) release_hold(up);
    Interleave::step(&rec.lock);
    rec.lock.store(0, std::memory_order_release);
  }

  /// Locks every resource in `locks` in order; on failure releases the
  /// prefix already taken and returns false.
  bool try_lock_all(std::span<const ResourceId> locks) {
    std::size_t j = 0;
    for (; j < locks.size(); ++j)
      if (!try_lock(locks[j])) break;
    if (j == locks.size()) return true;
    while (j-- > 0) unlock(locks[j]);
    return false;
  }

 private:
  std::vector<ResourceRecord> records_;
};

using ResourceTable = BasicResourceTable<>;

}  // namespace qsched
