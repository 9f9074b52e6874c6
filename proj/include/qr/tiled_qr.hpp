#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "qr/kernels.hpp"
#include "qsched/scheduler.hpp"

namespace qr {

enum TaskType : int { tDGEQRF = 0, tDLARFT = 1, tDTSQRF = 2, tDSSRFT = 3 };

/// Tile row, tile column and elimination level of one task.
struct QrTaskPayload {
  std::int32_t i = 0;
  std::int32_t j = 0;
  std::int32_t k = 0;
};

/// m x n tiles of b x b elements, plus one reflector accumulator per tile.
template <typename Scalar>
class TiledMatrix {
 public:
  using Tile = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  TiledMatrix(int m, int n, int b);

  /// Entries drawn uniformly from [-1, 1) with a seeded generator.
  static TiledMatrix random(int m, int n, int b, std::uint64_t seed);
  static TiledMatrix from_dense(const Dense& a, int b);

  [[nodiscard]] int tile_rows() const { return m_; }
  [[nodiscard]] int tile_cols() const { return n_; }
  [[nodiscard]] int tile_size() const { return b_; }

  Tile& tile(int i, int j) { return tiles_[index(i, j)]; }
  const Tile& tile(int i, int j) const { return tiles_[index(i, j)]; }
  Tile& accumulator(int i, int j) { return t_[index(i, j)]; }
  const Tile& accumulator(int i, int j) const { return t_[index(i, j)]; }

  [[nodiscard]] Dense to_dense() const;
  /// The upper-trapezoidal R held by a factored matrix.
  [[nodiscard]] Dense r_factor() const;
  /// x <- Q^T x, replaying the stored reflectors in elimination order.
  void apply_qt(Dense& x) const;
  /// Explicit Q, built by applying Q^T to the identity.
  [[nodiscard]] Dense q_factor() const;

  /// Bitwise equality of every tile and accumulator.
  [[nodiscard]] bool identical(const TiledMatrix& other) const;

 private:
  [[nodiscard]] std::size_t index(int i, int j) const {
    return static_cast<std::size_t>(j) * static_cast<std::size_t>(m_) + static_cast<std::size_t>(i);
  }

  int m_, n_, b_;
  std::vector<Tile> tiles_;
  std::vector<Tile> t_;
};

/// Handles produced while generating the QR task graph.
struct QrGraph {
  int m = 0;
  int n = 0;
  /// One resource per tile, column-major.
  std::vector<qsched::ResourceId> rid;
  /// Last task generated at each tile position.
  std::vector<qsched::TaskId> tid;
  /// Dependencies between tasks of the same level.
  std::size_t level_deps = 0;
  /// Edges from a task to the one at the same tile on the next level.
  std::size_t carry_deps = 0;
};

/// Generates the four-kernel task graph for an m x n tile matrix into an
/// empty scheduler. Tile resources are owned by queues in contiguous
/// column-major blocks.
QrGraph make_tasks(qsched::Scheduler& s, int m, int n, bool register_uses = true);

/// Task count for an m x n tile matrix.
std::size_t task_count(int m, int n);

/// Dispatches one task to its kernel.
template <typename Scalar>
void exec(TiledMatrix<Scalar>& a, int type, std::span<const std::byte> payload);

template <typename Scalar>
qsched::ExecFn make_exec(TiledMatrix<Scalar>& a) {
  return [&a](int type, std::span<const std::byte> payload) { exec(a, type, payload); };
}

struct QrCheck {
  double residual = 0;        // ||A - QR||_F / ||A||_F
  double orthogonality = 0;   // ||Q^T Q - I||_F
  double r_abs_max_diff = 0;  // max | |R| - |R_dense| | against a dense Householder QR
};

/// Checks a factored matrix against the original dense input.
template <typename Scalar>
QrCheck verify(const typename TiledMatrix<Scalar>::Dense& original, const TiledMatrix<Scalar>& factored);

/// Serial reference: runs the kernels in generation order without a scheduler.
template <typename Scalar>
void factor_serial(TiledMatrix<Scalar>& a);

}  // namespace qr
