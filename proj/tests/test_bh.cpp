#include <doctest.h>

#include <algorithm>
#include <atomic>
#include <cstring>
#include <mutex>
#include <random>
#include <vector>

#include "bh/barnes_hut.hpp"

using namespace qsched;
using bh::Vec3;

namespace {

bh::Particle at(double x, double y, double z, double mass = 1, std::int64_t id = 0) {
  bh::Particle p;
  p.x = Vec3(x, y, z);
  p.mass = mass;
  p.id = id;
  return p;
}

bh::Cell box(Vec3 loc, double h) {
  bh::Cell c;
  c.loc = loc;
  c.h = Vec3::Constant(h);
  return c;
}

bh::BhTaskPayload payload_of(const Scheduler& s, TaskId t) {
  bh::BhTaskPayload p;
  std::memcpy(&p, s.payload(t).data(), sizeof p);
  return p;
}

// Runs the interaction tasks serially with any interactor.
template <typename Interactor>
void replay(const Scheduler& s, const bh::Octree& tree, Interactor& it, bool with_pc = true) {
  for (std::size_t i = 0; i < s.task_count(); ++i) {
    const TaskId t(static_cast<std::int32_t>(i));
    const auto p = payload_of(s, t);
    switch (s.task(t).type) {
      case bh::tSELF: bh::comp_self(tree, p.ci, it); break;
      case bh::tPAIR_PP: bh::comp_pair(tree, p.ci, p.cj, it); break;
      case bh::tPAIR_PC:
        if (with_pc) bh::comp_pair_pc(tree, p.ci, it);
        break;
      default: break;
    }
  }
}

// Counts, for each ordered particle pair (i, j), how often i received j's pull.
struct CoverageLog {
  const bh::Octree& tree;
  std::size_t n;
  std::vector<std::uint16_t> hits;

  explicit CoverageLog(const bh::Octree& t) : tree(t), n(t.parts.size()), hits(n * n, 0) {}

  void direct(std::int64_t i, std::int64_t j) {
    ++hits[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)];
    ++hits[static_cast<std::size_t>(j) * n + static_cast<std::size_t>(i)];
  }
  void with_cell(std::int64_t i, const bh::Cell& c) {
    for (std::int64_t j = c.parts; j < c.parts + c.count; ++j)
      ++hits[static_cast<std::size_t>(i) * n + static_cast<std::size_t>(j)];
  }
};

bool inside(const bh::Particle& p, const bh::Cell& c) {
  return (p.x.array() >= c.loc.array()).all() && (p.x.array() <= (c.loc + c.h).array()).all();
}

}  // namespace

TEST_CASE("octree: few particles leave the root unsplit") {
  auto tree = bh::build_octree(bh::uniform_particles(10, 1), 16);
  CHECK(tree.cells.size() == 1);
  CHECK(!tree.root().split);
  CHECK(tree.root().count == 10);
  CHECK(tree.leaf_count() == 1);
}

TEST_CASE("octree: one particle per octant splits the root once") {
  std::vector<bh::Particle> parts;
  for (int o = 0; o < 8; ++o)
    parts.push_back(at(o & 4 ? 0.75 : 0.25, o & 2 ? 0.75 : 0.25, o & 1 ? 0.75 : 0.25, 1, o));
  std::ranges::reverse(parts);
  auto tree = bh::build_octree(parts, 1);
  REQUIRE(tree.root().split);
  CHECK(tree.cells.size() == 9);
  for (int o = 0; o < 8; ++o) {
    const auto& c = tree.cells[static_cast<std::size_t>(tree.root().progeny[static_cast<std::size_t>(o)])];
    CHECK(c.count == 1);
    CHECK(!c.split);
    CHECK(tree.parts[static_cast<std::size_t>(c.parts)].id == o);
  }
}

TEST_CASE("octree: every cell holds exactly its particles") {
  const auto input = bh::uniform_particles(10000, 3);
  auto tree = bh::build_octree(input, 8);
  std::vector<std::int64_t> ids;
  for (const auto& p : tree.parts) ids.push_back(p.id);
  std::ranges::sort(ids);
  for (std::size_t i = 0; i < ids.size(); ++i) REQUIRE(ids[i] == static_cast<std::int64_t>(i));

  std::size_t bad = 0, leaves = 0;
  for (std::size_t ci = 0; ci < tree.cells.size(); ++ci) {
    const auto& c = tree.cells[ci];
    for (std::int64_t i = c.parts; i < c.parts + c.count; ++i)
      if (!inside(tree.parts[static_cast<std::size_t>(i)], c)) ++bad;
    CHECK(c.split == (c.count > 8));
    if (!c.split) {
      ++leaves;
      continue;
    }
    std::int64_t next = c.parts;
    for (std::int32_t k : c.progeny) {
      REQUIRE(k >= 0);
      const auto& child = tree.cells[static_cast<std::size_t>(k)];
      CHECK(child.parent == static_cast<std::int32_t>(ci));
      CHECK(child.parts == next);
      CHECK((child.h * 2 - c.h).norm() < 1e-15);
      next += child.count;
    }
    CHECK(next == c.parts + c.count);
  }
  CHECK(bad == 0);
  CHECK(leaves == tree.leaf_count());
}

TEST_CASE("octree: particles outside the box are rejected") {
  auto parts = bh::uniform_particles(20, 1);
  parts[7].x.y() = 1.5;
  CHECK_THROWS_AS(bh::build_octree(parts, 4), InvalidArgument);
}

TEST_CASE("octree: coincident particles stop at the depth cap") {
  std::vector<bh::Particle> parts(40, at(0.3, 0.3, 0.3));
  auto tree = bh::build_octree(parts, 1);
  int deepest = 0;
  for (const auto& c : tree.cells) deepest = std::max(deepest, c.depth);
  CHECK(deepest == bh::kMaxDepth);
}

TEST_CASE("centre of mass") {
  SUBCASE("two masses") {
    auto tree = bh::build_octree({at(0.1, 0.2, 0.3), at(0.5, 0.6, 0.9)}, 4);
    bh::compute_com(tree, 0);
    CHECK(tree.root().mass == 2);
    CHECK((tree.root().com - Vec3(0.3, 0.4, 0.6)).norm() < 1e-15);
  }
  SUBCASE("aggregated children equal the flat particle sum") {
    auto parts = bh::uniform_particles(3000, 8);
    std::mt19937_64 rng(1);
    for (auto& p : parts) p.mass = 0.5 + std::uniform_real_distribution<double>(0, 1)(rng);
    auto tree = bh::build_octree(parts, 4);
    bh::compute_com_all(tree);
    double worst = 0;
    for (const auto& c : tree.cells) {
      if (c.count == 0) continue;
      double m = 0;
      Vec3 mx = Vec3::Zero();
      for (std::int64_t i = c.parts; i < c.parts + c.count; ++i) {
        m += tree.parts[static_cast<std::size_t>(i)].mass;
        mx += tree.parts[static_cast<std::size_t>(i)].mass * tree.parts[static_cast<std::size_t>(i)].x;
      }
      worst = std::max(worst, std::abs(c.mass - m) / m);
      worst = std::max(worst, (c.com - mx / m).norm() / (mx / m).norm());
    }
    CHECK(worst <= 1e-13);
  }
  SUBCASE("empty cell") {
    auto tree = bh::build_octree({at(0.1, 0.1, 0.1), at(0.2, 0.1, 0.1)}, 1);
    bh::compute_com_all(tree);
    const auto& empty = tree.cells[static_cast<std::size_t>(tree.root().progeny[7])];
    CHECK(empty.count == 0);
    CHECK(empty.mass == 0);
    CHECK((empty.com - empty.center()).norm() == 0);
  }
}

TEST_CASE("neighbour predicate") {
  CHECK(bh::neighbors(box(Vec3::Zero(), 1), box(Vec3::Zero(), 1)));
  CHECK(bh::neighbors(box(Vec3::Zero(), 1), box(Vec3::Ones(), 1)));
  CHECK(bh::neighbors(box(Vec3::Zero(), 1), box(Vec3(1, 0, 0), 1)));
  CHECK(!bh::neighbors(box(Vec3::Zero(), 1), box(Vec3(2, 0, 0), 1)));
  CHECK(!bh::neighbors(box(Vec3::Zero(), 1), box(Vec3(2, 2, 2), 1)));
  CHECK(bh::neighbors(box(Vec3::Zero(), 1), box(Vec3(0.25, 0.25, 0.25), 0.5)));
  CHECK(bh::neighbors(box(Vec3::Zero(), 0.5), box(Vec3(0.5, 0.5, 0), 0.25)));
  CHECK(!bh::neighbors(box(Vec3::Zero(), 0.25), box(Vec3(0.5, 0, 0), 0.25)));
}

TEST_CASE("task generation base case") {
  SUBCASE("unsplit root") {
    auto tree = bh::build_octree(bh::uniform_particles(50, 2), 100);
    Scheduler s(2);
    const auto g = bh::make_tasks(s, tree, 100);
    CHECK(g.self_tasks == 1);
    CHECK(g.pc_tasks == 1);
    CHECK(g.pair_tasks == 0);
    CHECK(g.com_tasks == 1);
    CHECK(s.task_count() == 3);
  }
  SUBCASE("split root below the task floor") {
    auto tree = bh::build_octree(bh::uniform_particles(50, 2), 4);
    Scheduler s(2);
    const auto g = bh::make_tasks(s, tree, 1000);
    CHECK(g.self_tasks == 1);
    CHECK(g.pc_tasks == 1);
    CHECK(g.pair_tasks == 0);
    CHECK(g.com_tasks == tree.cells.size());
  }
}

TEST_CASE("task graph structure") {
  auto tree = bh::build_octree(bh::uniform_particles(4000, 5), 8);
  Scheduler s(4);
  const auto g = bh::make_tasks(s, tree, 64);
  CHECK(g.self_tasks == g.pc_tasks);
  CHECK(g.total() == s.task_count());
  CHECK(s.resource_count() == tree.cells.size());
  const TaskId root_com = tree.root().task_com;
  for (std::size_t i = 0; i < s.task_count(); ++i) {
    const TaskId t(static_cast<std::int32_t>(i));
    const auto& rec = s.task(t);
    const auto p = payload_of(s, t);
    if (rec.type == bh::tPAIR_PP) {
      CHECK(bh::neighbors(tree.cells[static_cast<std::size_t>(p.ci)], tree.cells[static_cast<std::size_t>(p.cj)]));
      CHECK(rec.locks.size() == 2);
    }
    if (rec.type == bh::tPAIR_PC)
      CHECK(std::ranges::find(s.task(root_com).unlocks, t) != s.task(root_com).unlocks.end());
  }
  for (const auto& c : tree.cells) {
    if (c.parent < 0) continue;
    const auto& parent = tree.cells[static_cast<std::size_t>(c.parent)];
    CHECK(s.resources().parent(c.res) == parent.res);
    const auto& up = s.task(c.task_com).unlocks;
    CHECK(std::ranges::find(up, parent.task_com) != up.end());
  }
  Scheduler other(1);
  other.add_res();
  CHECK_THROWS_AS(bh::make_tasks(other, tree, 64), IllegalState);
  Scheduler fresh(1);
  CHECK_THROWS_AS(bh::make_tasks(fresh, tree, 0), InvalidArgument);
}

TEST_CASE("every ordered particle pair is accounted for exactly once") {
  std::mt19937_64 rng(17);
  for (int n_max : {1, 4, 16})
    for (int n_task : {1, 64}) {
      const auto n = static_cast<std::size_t>(std::uniform_int_distribution<int>(200, 2000)(rng));
      CAPTURE(n);
      CAPTURE(n_max);
      CAPTURE(n_task);
      auto tree = bh::build_octree(bh::uniform_particles(n, rng()), n_max);
      Scheduler s(1);
      bh::make_tasks(s, tree, n_task);
      CoverageLog log(tree);
      replay(s, tree, log);
      std::size_t wrong = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (log.hits[i * n + j] != (i == j ? 0 : 1)) ++wrong;
      CHECK(wrong == 0);
    }
}

TEST_CASE("two bodies") {
  auto tree = bh::build_octree({at(0.25, 0.5, 0.5), at(0.75, 0.5, 0.5, 2)}, 1);
  Scheduler s(2);
  bh::make_tasks(s, tree, 1);
  s.run(2, bh::make_exec(tree, 0));
  for (const auto& p : tree.parts) {
    const double other = p.mass == 1 ? 2 : 1;
    const double sign = p.x.x() < 0.5 ? 1 : -1;
    CHECK(p.a.x() == doctest::Approx(sign * other / 0.25).epsilon(1e-14));
    CHECK(p.a.y() == 0);
    CHECK(p.a.z() == 0);
  }
  const auto ref = bh::direct_sum(tree.parts, 0);
  CHECK(ref[0].x() == doctest::Approx(tree.parts[0].a.x()).epsilon(1e-15));
}

TEST_CASE("symmetric line of three bodies") {
  const std::vector<bh::Particle> parts{at(0.25, 0.5, 0.5), at(0.5, 0.5, 0.5), at(0.75, 0.5, 0.5)};
  const auto ref = bh::direct_sum(parts, 0);
  CHECK(ref[1].norm() == 0);
  CHECK(ref[0].x() == doctest::Approx(-ref[2].x()));
  CHECK(ref[0].x() == doctest::Approx(1 / 0.0625 + 1 / 0.25));
  auto tree = bh::build_octree(parts, 1);
  Scheduler s(1);
  bh::make_tasks(s, tree, 1);
  s.run(1, bh::make_exec(tree, 0));
  for (const auto& p : tree.parts)
    if (p.x.x() == 0.5) CHECK(p.a.norm() <= 1e-12);
}

TEST_CASE("softening bounds the pull of coincident particles") {
  const std::vector<bh::Particle> parts{at(0.5, 0.5, 0.5), at(0.5, 0.5, 0.5)};
  for (const auto& a : bh::direct_sum(parts, 0)) CHECK(a.norm() == 0);
  const Vec3 far = bh::accel(Vec3::Zero(), Vec3(1, 0, 0), 1, 1);
  CHECK(far.x() == doctest::Approx(1 / (2 * std::sqrt(2.0))));
}

TEST_CASE("direct interactions conserve momentum") {
  auto parts = bh::uniform_particles(3000, 12);
  std::mt19937_64 rng(3);
  for (auto& p : parts) p.mass = 0.5 + std::uniform_real_distribution<double>(0, 1)(rng);
  auto tree = bh::build_octree(parts, 8);
  Scheduler s(1);
  bh::make_tasks(s, tree, 64);
  bh::compute_com_all(tree);
  bh::ForceInteractor it(tree, 0);
  replay(s, tree, it, false);
  Vec3 total = Vec3::Zero();
  double scale = 0;
  for (const auto& p : tree.parts) {
    total += p.mass * p.a;
    scale += (p.mass * p.a).norm();
  }
  CHECK(total.norm() <= 1e-12 * scale);
}

TEST_CASE("a single leaf reproduces direct summation bitwise") {
  auto tree = bh::build_octree(bh::uniform_particles(200, 6), 500);
  const auto ref = bh::direct_sum(tree.parts, 0.01);
  Scheduler s(2);
  bh::make_tasks(s, tree, 500);
  s.run(2, bh::make_exec(tree, 0.01));
  std::size_t differ = 0;
  for (std::size_t i = 0; i < ref.size(); ++i)
    if (tree.parts[i].a != ref[i]) ++differ;
  CHECK(differ == 0);
}

TEST_CASE("tree accelerations approximate direct summation") {
  auto tree = bh::build_octree(bh::uniform_particles(3000, 4), 16);
  Scheduler s(2);
  bh::make_tasks(s, tree, 128);
  s.run(2, bh::make_exec(tree, 0));
  const double err = bh::relative_l2_error(tree.parts, bh::direct_sum(tree.parts, 0));
  CHECK(err > 0);
  CHECK(err < 1e-2);
}

TEST_CASE("unknown task type is rejected") {
  auto tree = bh::build_octree(bh::uniform_particles(10, 1), 16);
  const bh::BhTaskPayload p{0, -1};
  const auto bytes = std::as_bytes(std::span<const bh::BhTaskPayload, 1>(&p, 1));
  CHECK_THROWS_AS(bh::exec(tree, 0, 99, bytes), InvalidArgument);
  CHECK_THROWS_AS(bh::exec(tree, 0, bh::tSELF, bytes.first(3)), InvalidArgument);
}

TEST_CASE("concurrent tasks never write the same particles") {
  auto tree = bh::build_octree(bh::uniform_particles(3000, 9), 8);
  for (int threads : {2, 4, 8}) {
    Scheduler s(threads, SchedulerConfig{IdlePolicy::spin, false, static_cast<std::uint64_t>(threads), 4096});
    bh::make_tasks(s, tree, 32);
    bh::clear_accelerations(tree);
    std::vector<std::atomic<int>> writer(tree.parts.size());
    std::atomic<int> violations{0};
    auto claim = [&](std::int32_t ci, int delta) {
      if (ci < 0) return;
      const auto& c = tree.cells[static_cast<std::size_t>(ci)];
      for (std::int64_t i = c.parts; i < c.parts + c.count; ++i) {
        const int before = writer[static_cast<std::size_t>(i)].fetch_add(delta);
        if (delta > 0 && before != 0) ++violations;
      }
    };
    const auto exec = bh::make_exec(tree, 0);
    const auto report = s.run(threads, [&](int type, std::span<const std::byte> payload) {
      bh::BhTaskPayload p;
      std::memcpy(&p, payload.data(), sizeof p);
      if (type == bh::tCOM) return exec(type, payload);
      claim(p.ci, 1);
      if (type == bh::tPAIR_PP) claim(p.cj, 1);
      std::this_thread::yield();
      exec(type, payload);
      claim(p.ci, -1);
      if (type == bh::tPAIR_PP) claim(p.cj, -1);
    });
    CHECK(violations == 0);
    CHECK(validate_trace(report.records, s.tasks(), s.resources()).ok());

    std::int64_t com_done = 0, first_pc = std::numeric_limits<std::int64_t>::max();
    for (const auto& r : report.records) {
      if (r.type == bh::tCOM) com_done = std::max(com_done, r.toc_ns);
      if (r.type == bh::tPAIR_PC) first_pc = std::min(first_pc, r.tic_ns);
    }
    CHECK(com_done <= first_pc);
  }
}
