#include "bh/barnes_hut.hpp"

#include <algorithm>
#include <cstring>
#include <string>

namespace bh {

using qsched::TaskFlags;
using qsched::TaskId;

bool neighbors(const Cell& a, const Cell& b) {
  const Vec3 gap = ((a.center() - b.center()).cwiseAbs() - 0.5 * (a.h + b.h)).cwiseMax(0.0);
  return gap.maxCoeff() <= 1e-12;
}

namespace {

struct TaskBuilder {
  qsched::Scheduler& s;
  Octree& tree;
  std::int64_t n_task;
  BhGraph graph;

  Cell& cell(std::int32_t i) { return tree.cells[static_cast<std::size_t>(i)]; }

  void recurse(std::int32_t ci, std::int32_t cj) {
    Cell& a = cell(ci);
    if (cj < 0) {
      if (a.split && a.count > n_task) {
        for (std::size_t j = 0; j < 8; ++j) {
          recurse(a.progeny[j], -1);
          for (std::size_t k = j + 1; k < 8; ++k) recurse(a.progeny[j], a.progeny[k]);
        }
        return;
      }
      const TaskId self = s.add_task(tSELF, TaskFlags::none, BhTaskPayload{ci, -1}, a.count * a.count);
      s.add_lock(self, a.res);
      const TaskId pc = s.add_task(tPAIR_PC, TaskFlags::none, BhTaskPayload{ci, -1}, a.count);
      s.add_lock(pc, a.res);
      s.add_unlock(tree.root().task_com, pc);
      ++graph.self_tasks;
      ++graph.pc_tasks;
      return;
    }
    Cell& b = cell(cj);
    if (!neighbors(a, b)) return;
    if (a.split && b.split && a.count * b.count > n_task * n_task) {
      for (std::int32_t j : a.progeny)
        for (std::int32_t k : b.progeny) recurse(j, k);
      return;
    }
    const TaskId pp = s.add_task(tPAIR_PP, TaskFlags::none, BhTaskPayload{ci, cj}, a.count * b.count);
    s.add_lock(pp, a.res);
    s.add_lock(pp, b.res);
    ++graph.pair_tasks;
  }
};

}  // namespace

BhGraph make_tasks(qsched::Scheduler& s, Octree& tree, int n_task) {
  if (n_task < 1) throw qsched::InvalidArgument("bh make_tasks: n_task must be >= 1");
  if (s.task_count() != 0 || s.resource_count() != 0)
    throw qsched::IllegalState("bh make_tasks: scheduler must be empty");

  const auto n = static_cast<std::int64_t>(tree.parts.size());
  const std::int64_t queues = s.nr_queues();
  for (auto& c : tree.cells) {
    const std::int64_t owner = n > 0 ? std::min(c.parts * queues / n, queues - 1) : 0;
    const qsched::ResourceId parent =
        c.parent >= 0 ? tree.cells[static_cast<std::size_t>(c.parent)].res : qsched::kNoResource;
    c.res = s.add_res(qsched::QueueId(static_cast<std::int32_t>(owner)), parent);
  }

  TaskBuilder b{s, tree, n_task, {}};
  for (std::size_t i = 0; i < tree.cells.size(); ++i) {
    Cell& c = tree.cells[i];
    c.task_com = s.add_task(tCOM, TaskFlags::none, BhTaskPayload{static_cast<std::int32_t>(i), -1},
                            c.split ? 8 : c.count);
    if (c.parent >= 0) s.add_unlock(c.task_com, tree.cells[static_cast<std::size_t>(c.parent)].task_com);
    ++b.graph.com_tasks;
  }
  b.recurse(0, -1);
  return b.graph;
}

void exec(Octree& tree, double eps, int type, std::span<const std::byte> payload) {
  if (payload.size() != sizeof(BhTaskPayload)) throw qsched::InvalidArgument("bh exec: malformed payload");
  BhTaskPayload p;
  std::memcpy(&p, payload.data(), sizeof p);
  ForceInteractor it(tree, eps);
  switch (type) {
    case tSELF:
      comp_self(tree, p.ci, it);
      break;
    case tPAIR_PP:
      comp_pair(tree, p.ci, p.cj, it);
      break;
    case tPAIR_PC:
      comp_pair_pc(tree, p.ci, it);
      break;
    case tCOM:
      compute_com(tree, p.ci);
      break;
    default:
      throw qsched::InvalidArgument("Unknown task type " + std::to_string(type));
  }
}

std::vector<Vec3> direct_sum(std::span<const Particle> parts, double eps) {
  std::vector<Vec3> a(parts.size(), Vec3::Zero());
  for (std::size_t i = 0; i < parts.size(); ++i)
    for (std::size_t j = i + 1; j < parts.size(); ++j) {
      const Vec3 d = parts[j].x - parts[i].x;
      const double r2 = d.squaredNorm() + eps * eps;
      const Vec3 f = d / std::max(r2 * std::sqrt(r2), 1e-30);
      a[i] += parts[j].mass * f;
      a[j] -= parts[i].mass * f;
    }
  return a;
}

double relative_l2_error(std::span<const Particle> parts, std::span<const Vec3> reference) {
  if (parts.size() != reference.size()) throw qsched::InvalidArgument("relative_l2_error: size mismatch");
  double num = 0, den = 0;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    num += (parts[i].a - reference[i]).squaredNorm();
    den += reference[i].squaredNorm();
  }
  return den > 0 ? std::sqrt(num / den) : std::sqrt(num);
}

void clear_accelerations(Octree& tree) {
  for (auto& p : tree.parts) p.a.setZero();
}

}  // namespace bh
