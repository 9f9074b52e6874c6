#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "qsched/types.hpp"

namespace bh {

using Vec3 = Eigen::Vector3d;

struct Particle {
  Vec3 x = Vec3::Zero();
  Vec3 a = Vec3::Zero();
  double mass = 1.0;
  std::int64_t id = 0;
};

/// Octree node over the contiguous particle range [parts, parts + count).
struct Cell {
  Vec3 loc = Vec3::Zero();  // lower corner
  Vec3 h = Vec3::Ones();    // edge lengths
  Vec3 com = Vec3::Zero();
  double mass = 0;
  bool split = false;
  std::int64_t count = 0;
  std::int64_t parts = 0;
  // Child cell indices by octant 4x + 2y + z, -1 when unsplit.
  std::array<std::int32_t, 8> progeny{-1, -1, -1, -1, -1, -1, -1, -1};
  std::int32_t parent = -1;
  int depth = 0;
  qsched::ResourceId res;
  qsched::TaskId task_com;

  [[nodiscard]] Vec3 center() const { return loc + 0.5 * h; }
};

/// Cells stop splitting at this depth even above n_max, so coincident
/// particles cannot recurse forever.
inline constexpr int kMaxDepth = 30;

/// Particles sorted hierarchically in place plus the cells over them. Cell 0
/// is the root.
struct Octree {
  std::vector<Particle> parts;
  std::vector<Cell> cells;
  int n_max = 1;

  [[nodiscard]] const Cell& root() const { return cells.front(); }
  [[nodiscard]] std::size_t leaf_count() const;
};

/// Bisects the box [loc, loc + h] in all three dimensions while a cell holds
/// more than n_max particles, partitioning the particle array in place.
/// Throws qsched::InvalidArgument on a particle outside the box.
Octree build_octree(std::vector<Particle> parts, int n_max, const Vec3& loc = Vec3::Zero(),
                    const Vec3& h = Vec3::Ones());

/// Mass and center of mass of one cell, from its children when split and
/// from its particles otherwise. An empty cell gets its box center.
void compute_com(Octree& tree, std::int32_t cell);

/// Computes every cell's COM bottom-up.
void compute_com_all(Octree& tree);

/// N particles of unit mass drawn uniformly from the unit cube.
std::vector<Particle> uniform_particles(std::size_t n, std::uint64_t seed);

}  // namespace bh
