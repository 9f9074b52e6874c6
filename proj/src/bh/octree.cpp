#include "bh/octree.hpp"

#include <algorithm>
#include <random>
#include <string>

namespace bh {

namespace {

void split_cell(Octree& tree, std::int32_t ci) {
  const Cell parent = tree.cells[static_cast<std::size_t>(ci)];
  if (parent.count <= tree.n_max || parent.depth >= kMaxDepth) return;

  const Vec3 half = 0.5 * parent.h;
  const Vec3 mid = parent.loc + half;
  auto first = tree.parts.begin() + parent.parts;
  auto last = first + parent.count;

  // Three nested partitions order the range by octant index.
  std::array<std::vector<Particle>::iterator, 9> bounds;
  bounds[0] = first;
  bounds[8] = last;
  bounds[4] = std::partition(first, last, [&](const Particle& p) { return p.x.x() < mid.x(); });
  for (int hx = 0; hx < 2; ++hx) {
    const int base = 4 * hx;
    bounds[base + 2] =
        std::partition(bounds[base], bounds[base + 4], [&](const Particle& p) { return p.x.y() < mid.y(); });
    for (int hy = 0; hy < 2; ++hy) {
      const int b = base + 2 * hy;
      bounds[b + 1] =
          std::partition(bounds[b], bounds[b + 2], [&](const Particle& p) { return p.x.z() < mid.z(); });
    }
  }

  tree.cells[static_cast<std::size_t>(ci)].split = true;
  for (int k = 0; k < 8; ++k) {
    Cell c;
    c.h = half;
    c.loc = parent.loc + Vec3((k & 4) ? half.x() : 0.0, (k & 2) ? half.y() : 0.0, (k & 1) ? half.z() : 0.0);
    c.parts = bounds[static_cast<std::size_t>(k)] - tree.parts.begin();
    c.count = bounds[static_cast<std::size_t>(k) + 1] - bounds[static_cast<std::size_t>(k)];
    c.parent = ci;
    c.depth = parent.depth + 1;
    const auto child = static_cast<std::int32_t>(tree.cells.size());
    tree.cells.push_back(c);
    tree.cells[static_cast<std::size_t>(ci)].progeny[static_cast<std::size_t>(k)] = child;
  }
  for (int k = 0; k < 8; ++k) split_cell(tree, tree.cells[static_cast<std::size_t>(ci)].progeny[static_cast<std::size_t>(k)]);
}

}  // namespace

std::size_t Octree::leaf_count() const {
  return static_cast<std::size_t>(std::ranges::count_if(cells, [](const Cell& c) { return !c.split; }));
}

Octree build_octree(std::vector<Particle> parts, int n_max, const Vec3& loc, const Vec3& h) {
  if (n_max < 1) throw qsched::InvalidArgument("build_octree: n_max must be >= 1");
  if (!(h.array() > 0).all()) throw qsched::InvalidArgument("build_octree: box edges must be positive");
  const Vec3 hi = loc + h;
  for (const auto& p : parts)
    if (!p.x.allFinite() || (p.x.array() < loc.array()).any() || (p.x.array() > hi.array()).any())
      throw qsched::InvalidArgument("build_octree: particle " + std::to_string(p.id) + " lies outside the box");

  Octree tree;
  tree.n_max = n_max;
  tree.parts = std::move(parts);
  Cell root;
  root.loc = loc;
  root.h = h;
  root.count = static_cast<std::int64_t>(tree.parts.size());
  tree.cells.push_back(root);
  split_cell(tree, 0);
  return tree;
}

void compute_com(Octree& tree, std::int32_t ci) {
  Cell& c = tree.cells[static_cast<std::size_t>(ci)];
  double mass = 0;
  Vec3 moment = Vec3::Zero();
  if (c.split) {
    for (std::int32_t k : c.progeny) {
      const Cell& child = tree.cells[static_cast<std::size_t>(k)];
      mass += child.mass;
      moment += child.mass * child.com;
    }
  } else {
    for (std::int64_t i = c.parts; i < c.parts + c.count; ++i) {
      const Particle& p = tree.parts[static_cast<std::size_t>(i)];
      mass += p.mass;
      moment += p.mass * p.x;
    }
  }
  c.mass = mass;
  c.com = mass > 0 ? Vec3(moment / mass) : c.center();
}

void compute_com_all(Octree& tree) {
  // Children always come after their parent.
  for (auto ci = static_cast<std::int32_t>(tree.cells.size()) - 1; ci >= 0; --ci) compute_com(tree, ci);
}

std::vector<Particle> uniform_particles(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  std::vector<Particle> parts(n);
  for (std::size_t i = 0; i < n; ++i) {
    parts[i].x = Vec3(dist(gen), dist(gen), dist(gen));
    parts[i].id = static_cast<std::int64_t>(i);
  }
  return parts;
}

}  // namespace bh
