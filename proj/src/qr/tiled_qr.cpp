#include "qr/tiled_qr.hpp"

#include <Eigen/QR>
#include <algorithm>
#include <cstring>
#include <random>
#include <string>

namespace qr {

using qsched::ResourceId;
using qsched::TaskId;

template <typename Scalar>
TiledMatrix<Scalar>::TiledMatrix(int m, int n, int b) : m_(m), n_(n), b_(b) {
  if (m < 1 || n < 1 || b < 1) throw qsched::InvalidArgument("TiledMatrix: dimensions must be positive");
  const auto count = static_cast<std::size_t>(m) * static_cast<std::size_t>(n);
  tiles_.assign(count, Tile::Zero(b, b));
  t_.assign(count, Tile::Zero(b, b));
}

template <typename Scalar>
TiledMatrix<Scalar> TiledMatrix<Scalar>::random(int m, int n, int b, std::uint64_t seed) {
  TiledMatrix out(m, n, b);
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  // Fill in dense column-major order so the matrix does not depend on b.
  Dense a(static_cast<Eigen::Index>(m) * b, static_cast<Eigen::Index>(n) * b);
  for (Eigen::Index c = 0; c < a.cols(); ++c)
    for (Eigen::Index r = 0; r < a.rows(); ++r) a(r, c) = static_cast<Scalar>(dist(gen));
  return from_dense(a, b);
}

template <typename Scalar>
TiledMatrix<Scalar> TiledMatrix<Scalar>::from_dense(const Dense& a, int b) {
  if (b < 1 || a.rows() % b != 0 || a.cols() % b != 0)
    throw qsched::InvalidArgument("from_dense: matrix dimensions must be multiples of the tile size");
  TiledMatrix out(static_cast<int>(a.rows() / b), static_cast<int>(a.cols() / b), b);
  for (int j = 0; j < out.n_; ++j)
    for (int i = 0; i < out.m_; ++i) out.tile(i, j) = a.block(i * b, j * b, b, b);
  return out;
}

template <typename Scalar>
typename TiledMatrix<Scalar>::Dense TiledMatrix<Scalar>::to_dense() const {
  Dense a(static_cast<Eigen::Index>(m_) * b_, static_cast<Eigen::Index>(n_) * b_);
  for (int j = 0; j < n_; ++j)
    for (int i = 0; i < m_; ++i) a.block(i * b_, j * b_, b_, b_) = tile(i, j);
  return a;
}

template <typename Scalar>
typename TiledMatrix<Scalar>::Dense TiledMatrix<Scalar>::r_factor() const {
  Dense r = Dense::Zero(static_cast<Eigen::Index>(m_) * b_, static_cast<Eigen::Index>(n_) * b_);
  for (int j = 0; j < n_; ++j)
    for (int i = 0; i < m_ && i <= j; ++i) {
      if (i == j)
        r.block(i * b_, j * b_, b_, b_) = tile(i, j).template triangularView<Eigen::Upper>();
      else
        r.block(i * b_, j * b_, b_, b_) = tile(i, j);
    }
  return r;
}

template <typename Scalar>
void TiledMatrix<Scalar>::apply_qt(Dense& x) const {
  for (int k = 0; k < std::min(m_, n_); ++k) {
    dlarft(tile(k, k), accumulator(k, k), x.middleRows(k * b_, b_));
    for (int i = k + 1; i < m_; ++i)
      dssrft(tile(i, k), accumulator(i, k), x.middleRows(k * b_, b_), x.middleRows(i * b_, b_));
  }
}

template <typename Scalar>
typename TiledMatrix<Scalar>::Dense TiledMatrix<Scalar>::q_factor() const {
  const Eigen::Index rows = static_cast<Eigen::Index>(m_) * b_;
  Dense qt = Dense::Identity(rows, rows);
  apply_qt(qt);
  return qt.transpose();
}

template <typename Scalar>
bool TiledMatrix<Scalar>::identical(const TiledMatrix& other) const {
  if (m_ != other.m_ || n_ != other.n_ || b_ != other.b_) return false;
  const auto bytes = sizeof(Scalar) * static_cast<std::size_t>(b_) * static_cast<std::size_t>(b_);
  for (std::size_t k = 0; k < tiles_.size(); ++k) {
    if (std::memcmp(tiles_[k].data(), other.tiles_[k].data(), bytes) != 0) return false;
    if (std::memcmp(t_[k].data(), other.t_[k].data(), bytes) != 0) return false;
  }
  return true;
}

std::size_t task_count(int m, int n) {
  std::size_t total = 0;
  for (int k = 0; k < std::min(m, n); ++k) {
    const auto rows = static_cast<std::size_t>(m - 1 - k);
    const auto cols = static_cast<std::size_t>(n - 1 - k);
    total += 1 + rows + cols + rows * cols;
  }
  return total;
}

QrGraph make_tasks(qsched::Scheduler& s, int m, int n, bool register_uses) {
  if (m < 1 || n < 1) throw qsched::InvalidArgument("qr make_tasks: tile counts must be positive");
  if (s.task_count() != 0 || s.resource_count() != 0)
    throw qsched::IllegalState("qr make_tasks: scheduler must be empty");

  QrGraph g;
  g.m = m;
  g.n = n;
  const auto tiles = static_cast<std::size_t>(m) * static_cast<std::size_t>(n);
  const auto queues = static_cast<std::size_t>(s.nr_queues());
  const std::size_t per_queue = tiles / queues;
  g.rid.reserve(tiles);
  for (std::size_t idx = 0; idx < tiles; ++idx) {
    const std::size_t owner = per_queue > 0 ? std::min(idx / per_queue, queues - 1) : idx % queues;
    g.rid.push_back(s.add_res(qsched::QueueId(static_cast<std::int32_t>(owner))));
  }
  g.tid.assign(tiles, qsched::kNoTask);

  auto at = [m](int i, int j) { return static_cast<std::size_t>(j) * static_cast<std::size_t>(m) + i; };
  auto depend = [&](TaskId before, TaskId after) {
    s.add_unlock(before, after);
    ++g.level_deps;
  };
  // Each task follows the previous level's task on the same tile.
  auto place = [&](int i, int j, TaskId t) {
    TaskId& last = g.tid[at(i, j)];
    if (last.valid()) {
      s.add_unlock(last, t);
      ++g.carry_deps;
    }
    last = t;
  };
  auto use = [&](TaskId t, int i, int j) {
    if (register_uses) s.add_use(t, g.rid[at(i, j)]);
  };

  for (int k = 0; k < m && k < n; ++k) {
    const TaskId diag = s.add_task(tDGEQRF, qsched::TaskFlags::none, QrTaskPayload{k, k, k}, 2);
    s.add_lock(diag, g.rid[at(k, k)]);
    place(k, k, diag);

    for (int j = k + 1; j < n; ++j) {
      const TaskId t = s.add_task(tDLARFT, qsched::TaskFlags::none, QrTaskPayload{k, j, k}, 3);
      s.add_lock(t, g.rid[at(k, j)]);
      use(t, k, k);
      depend(diag, t);
      place(k, j, t);
    }

    for (int i = k + 1; i < m; ++i) {
      // DTSQRF tasks of one level chain through the shared R of tile (k,k).
      const TaskId ts = s.add_task(tDTSQRF, qsched::TaskFlags::none, QrTaskPayload{i, k, k}, 3);
      s.add_lock(ts, g.rid[at(i, k)]);
      use(ts, k, k);
      depend(g.tid[at(i - 1, k)], ts);
      place(i, k, ts);

      for (int j = k + 1; j < n; ++j) {
        // Updates the pair (k,j), (i,j); ordered after the previous update of (k,j).
        const TaskId t = s.add_task(tDSSRFT, qsched::TaskFlags::none, QrTaskPayload{i, j, k}, 5);
        s.add_lock(t, g.rid[at(i, j)]);
        s.add_lock(t, g.rid[at(k, j)]);
        use(t, i, k);
        depend(ts, t);
        depend(g.tid[at(i - 1, j)], t);
        place(i, j, t);
      }
    }
  }
  return g;
}

template <typename Scalar>
void exec(TiledMatrix<Scalar>& a, int type, std::span<const std::byte> payload) {
  if (payload.size() != sizeof(QrTaskPayload)) throw qsched::InvalidArgument("qr exec: malformed payload");
  QrTaskPayload p;
  std::memcpy(&p, payload.data(), sizeof p);
  const int i = p.i, j = p.j, k = p.k;
  switch (type) {
    case tDGEQRF:
      dgeqrf(a.tile(k, k), a.accumulator(k, k));
      break;
    case tDLARFT:
      dlarft(a.tile(k, k), a.accumulator(k, k), a.tile(k, j));
      break;
    case tDTSQRF:
      dtsqrf(a.tile(k, k), a.tile(i, k), a.accumulator(i, k));
      break;
    case tDSSRFT:
      dssrft(a.tile(i, k), a.accumulator(i, k), a.tile(k, j), a.tile(i, j));
      break;
    default:
      throw qsched::InvalidArgument("Unknown task type " + std::to_string(type));
  }
}

template <typename Scalar>
void factor_serial(TiledMatrix<Scalar>& a) {
  const int m = a.tile_rows(), n = a.tile_cols();
  for (int k = 0; k < std::min(m, n); ++k) {
    dgeqrf(a.tile(k, k), a.accumulator(k, k));
    for (int j = k + 1; j < n; ++j) dlarft(a.tile(k, k), a.accumulator(k, k), a.tile(k, j));
    for (int i = k + 1; i < m; ++i) {
      dtsqrf(a.tile(k, k), a.tile(i, k), a.accumulator(i, k));
      for (int j = k + 1; j < n; ++j) dssrft(a.tile(i, k), a.accumulator(i, k), a.tile(k, j), a.tile(i, j));
    }
  }
}

template <typename Scalar>
QrCheck verify(const typename TiledMatrix<Scalar>::Dense& original, const TiledMatrix<Scalar>& factored) {
  using Dense = typename TiledMatrix<Scalar>::Dense;
  using Wide = Eigen::MatrixXd;
  const Dense q = factored.q_factor();
  const Dense r = factored.r_factor();

  QrCheck out;
  const Wide a = original.template cast<double>();
  const Wide qd = q.template cast<double>();
  const Wide rd = r.template cast<double>();
  out.residual = (a - qd * rd).norm() / a.norm();
  out.orthogonality = (qd.transpose() * qd - Wide::Identity(qd.cols(), qd.cols())).norm();

  Eigen::HouseholderQR<Wide> dense(a);
  const Wide r_ref = dense.matrixQR().template triangularView<Eigen::Upper>();
  out.r_abs_max_diff = (rd.cwiseAbs() - r_ref.cwiseAbs()).cwiseAbs().maxCoeff();
  return out;
}

template class TiledMatrix<float>;
template class TiledMatrix<double>;
template void exec<float>(TiledMatrix<float>&, int, std::span<const std::byte>);
template void exec<double>(TiledMatrix<double>&, int, std::span<const std::byte>);
template void factor_serial<float>(TiledMatrix<float>&);
template void factor_serial<double>(TiledMatrix<double>&);
template QrCheck verify<float>(const TiledMatrix<float>::Dense&, const TiledMatrix<float>&);
template QrCheck verify<double>(const TiledMatrix<double>::Dense&, const TiledMatrix<double>&);

}  // namespace qr
