#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bh/octree.hpp"
#include "qsched/scheduler.hpp"

namespace bh {

enum TaskType : int { tSELF = 0, tPAIR_PP = 1, tPAIR_PC = 2, tCOM = 3 };

struct BhParams {
  int n_max = 100;
  int n_task = 5000;
  double epsilon = 0;  // Plummer softening
};

/// Boxes intersect or touch, diagonal contact included.
bool neighbors(const Cell& a, const Cell& b);

/// Cells a task operates on. Unused slots are -1.
struct BhTaskPayload {
  std::int32_t ci = -1;
  std::int32_t cj = -1;
};

struct BhGraph {
  std::size_t self_tasks = 0;
  std::size_t pair_tasks = 0;
  std::size_t pc_tasks = 0;
  std::size_t com_tasks = 0;
  [[nodiscard]] std::size_t total() const { return self_tasks + pair_tasks + pc_tasks + com_tasks; }
};

/// Adds one resource per cell (nested like the cells, owned by the queue
/// whose slice of the particle array holds the cell's first particle), the
/// COM task tree and the interaction tasks, into an empty scheduler.
BhGraph make_tasks(qsched::Scheduler& s, Octree& tree, int n_task);

// Kernels -------------------------------------------------------------------

/// Acceleration on a particle at `xi` from a point mass `mj` at `xj`, G = 1.
inline Vec3 accel(const Vec3& xi, const Vec3& xj, double mj, double eps) {
  const Vec3 d = xj - xi;
  const double r2 = d.squaredNorm() + eps * eps;
  const double denom = std::max(r2 * std::sqrt(r2), 1e-30);
  return (mj / denom) * d;
}

/// Applies each interaction to the particle accelerations.
class ForceInteractor {
 public:
  ForceInteractor(Octree& tree, double eps) : tree_(tree), eps_(eps) {}

  void direct(std::int64_t i, std::int64_t j) {
    Particle& pi = tree_.parts[static_cast<std::size_t>(i)];
    Particle& pj = tree_.parts[static_cast<std::size_t>(j)];
    const Vec3 d = pj.x - pi.x;
    const double r2 = d.squaredNorm() + eps_ * eps_;
    const Vec3 f = d / std::max(r2 * std::sqrt(r2), 1e-30);
    pi.a += pj.mass * f;
    pj.a -= pi.mass * f;
  }

  void with_cell(std::int64_t i, const Cell& c) {
    Particle& p = tree_.parts[static_cast<std::size_t>(i)];
    p.a += accel(p.x, c.com, c.mass, eps_);
  }

 private:
  Octree& tree_;
  double eps_;
};

namespace detail {

inline const Cell& cell(const Octree& t, std::int32_t i) { return t.cells[static_cast<std::size_t>(i)]; }

inline bool is_ancestor_or_self(const Octree& t, std::int32_t anc, std::int32_t c) {
  for (; c >= 0; c = cell(t, c).parent)
    if (c == anc) return true;
  return false;
}

// Particle-cell contributions that the direct pair walk (a, b) leaves out,
// restricted to the particles of `leaf` inside `a`.
template <typename Interactor>
void pc_pair(const Octree& t, std::int32_t leaf, std::int32_t a, std::int32_t b, Interactor& it) {
  const Cell& ca = cell(t, a);
  const Cell& cb = cell(t, b);
  if (!neighbors(ca, cb)) {
    const Cell& cl = cell(t, leaf);
    const std::int64_t lo = std::max(ca.parts, cl.parts);
    const std::int64_t hi = std::min(ca.parts + ca.count, cl.parts + cl.count);
    for (std::int64_t i = lo; i < hi; ++i) it.with_cell(i, cb);
    return;
  }
  if (!(ca.split && cb.split)) return;
  const bool below = is_ancestor_or_self(t, leaf, a);
  for (std::int32_t ka : ca.progeny) {
    if (!below && !is_ancestor_or_self(t, ka, leaf)) continue;
    for (std::int32_t kb : cb.progeny) pc_pair(t, leaf, ka, kb, it);
  }
}

template <typename Interactor>
void pc_self(const Octree& t, std::int32_t leaf, std::int32_t c, Interactor& it) {
  const Cell& cc = cell(t, c);
  if (!cc.split) return;
  for (std::int32_t j : cc.progeny) {
    pc_self(t, leaf, j, it);
    for (std::int32_t k : cc.progeny)
      if (k != j) pc_pair(t, leaf, j, k, it);
  }
}

}  // namespace detail

template <typename Interactor>
void comp_pair(const Octree& t, std::int32_t ci, std::int32_t cj, Interactor& it);

/// All pairs inside cell `c`.
template <typename Interactor>
void comp_self(const Octree& t, std::int32_t c, Interactor& it) {
  const Cell& cc = detail::cell(t, c);
  if (cc.split) {
    for (std::size_t j = 0; j < 8; ++j) {
      comp_self(t, cc.progeny[j], it);
      for (std::size_t k = j + 1; k < 8; ++k) comp_pair(t, cc.progeny[j], cc.progeny[k], it);
    }
    return;
  }
  for (std::int64_t j = cc.parts; j < cc.parts + cc.count; ++j)
    for (std::int64_t k = j + 1; k < cc.parts + cc.count; ++k) it.direct(j, k);
}

/// All pairs spanning neighbouring cells `ci` and `cj`.
template <typename Interactor>
void comp_pair(const Octree& t, std::int32_t ci, std::int32_t cj, Interactor& it) {
  const Cell& a = detail::cell(t, ci);
  const Cell& b = detail::cell(t, cj);
  if (!neighbors(a, b)) return;
  if (a.split && b.split) {
    for (std::int32_t j : a.progeny)
      for (std::int32_t k : b.progeny) comp_pair(t, j, k, it);
    return;
  }
  for (std::int64_t j = a.parts; j < a.parts + a.count; ++j)
    for (std::int64_t k = b.parts; k < b.parts + b.count; ++k) it.direct(j, k);
}

/// Centre-of-mass interactions for the particles of `leaf`: every pair of
/// cells the direct walks reach without touching is replaced by the
/// monopole of the far cell. Walks down from the root through the leaf's
/// ancestors and, inside the leaf, through its own sub-cells.
template <typename Interactor>
void comp_pair_pc(const Octree& t, std::int32_t leaf, Interactor& it) {
  std::vector<std::int32_t> chain;
  for (std::int32_t c = leaf; c >= 0; c = detail::cell(t, c).parent) chain.push_back(c);
  for (std::size_t level = chain.size() - 1; level > 0; --level) {
    const Cell& x = detail::cell(t, chain[level]);
    const std::int32_t y = chain[level - 1];
    for (std::int32_t z : x.progeny)
      if (z != y) detail::pc_pair(t, leaf, y, z, it);
  }
  detail::pc_self(t, leaf, leaf, it);
}

/// Dispatches one task.
void exec(Octree& tree, double eps, int type, std::span<const std::byte> payload);

inline qsched::ExecFn make_exec(Octree& tree, double eps) {
  return [&tree, eps](int type, std::span<const std::byte> payload) { exec(tree, eps, type, payload); };
}

/// O(N^2) accelerations in array order with the kernel used by the tasks.
std::vector<Vec3> direct_sum(std::span<const Particle> parts, double eps);

/// Relative L2 error of the particles' accelerations against `reference`,
/// both in array order.
double relative_l2_error(std::span<const Particle> parts, std::span<const Vec3> reference);

void clear_accelerations(Octree& tree);

}  // namespace bh
