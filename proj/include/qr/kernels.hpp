#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <stdexcept>
#include <string>

namespace qr {

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* kernel) {
  if (!m.allFinite()) throw NumericalError(std::string(kernel) + ": non-finite input tile");
}

// Eigen's idiom for writable expression arguments.
template <typename Derived>
Eigen::MatrixBase<Derived>& writable(const Eigen::MatrixBase<Derived>& m) {
  return const_cast<Eigen::MatrixBase<Derived>&>(m);
}

}  // namespace detail

// Tile kernels of the flat-tree tiled QR. Reflector blocks are kept in
// compact WY form: Q = H_0 H_1 ... H_{b-1} = I - V T V^T, with T upper
// triangular and stored beside the tile that holds V.

/// Householder QR of tile `a` in place: R in the upper triangle, unit-lower
/// reflectors below the diagonal, accumulator written to `t`.
template <typename DerivedA, typename DerivedT>
void dgeqrf(const Eigen::MatrixBase<DerivedA>& a_, const Eigen::MatrixBase<DerivedT>& t_) {
  using Scalar = typename DerivedA::Scalar;
  using Real = typename DerivedA::RealScalar;
  auto& a = detail::writable(a_);
  auto& t = detail::writable(t_);
  detail::require_finite(a, "dgeqrf");

  const Eigen::Index rows = a.rows();
  const Eigen::Index cols = a.cols();
  const Eigen::Index nref = std::min(rows, cols);
  t.setZero();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> work(cols);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> v(rows);

  for (Eigen::Index c = 0; c < nref; ++c) {
    const Eigen::Index rem = rows - c;
    Scalar tau;
    Real beta;
    a.col(c).tail(rem).makeHouseholderInPlace(tau, beta);
    a.bottomRightCorner(rem, cols - c - 1)
        .applyHouseholderOnTheLeft(a.col(c).tail(rem - 1), tau, work.data());
    a(c, c) = beta;

    v.head(rem) << Scalar(1), a.col(c).tail(rem - 1);
    if (c > 0) {
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y = a.block(c, 0, rem, c).transpose() * v.head(rem);
      // Unit diagonal of the earlier reflectors sits in row j < c, outside this block.
      t.col(c).head(c).noalias() = t.topLeftCorner(c, c).template triangularView<Eigen::Upper>() * y;
      t.col(c).head(c) *= -tau;
    }
    t(c, c) = tau;
  }
}

/// Applies the transposed reflector block of a factored diagonal tile
/// (`v` from dgeqrf, accumulator `t`) to tile `c`: c <- Q^T c.
template <typename DerivedV, typename DerivedT, typename DerivedC>
void dlarft(const Eigen::MatrixBase<DerivedV>& v, const Eigen::MatrixBase<DerivedT>& t,
            const Eigen::MatrixBase<DerivedC>& c_) {
  using Scalar = typename DerivedC::Scalar;
  auto& c = detail::writable(c_);
  detail::require_finite(c, "dlarft");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> w =
      v.template triangularView<Eigen::UnitLower>().transpose() * c;
  w = t.template triangularView<Eigen::Upper>().transpose() * w;
  c.noalias() -= v.template triangularView<Eigen::UnitLower>() * w;
}

/// QR of the stacked pair [R; A] where R is the upper triangle of `r`
/// (its strictly lower part is left untouched). R is updated in place, the
/// reflectors' lower halves overwrite `a`, and the accumulator goes to `t`.
template <typename DerivedR, typename DerivedA, typename DerivedT>
void dtsqrf(const Eigen::MatrixBase<DerivedR>& r_, const Eigen::MatrixBase<DerivedA>& a_,
            const Eigen::MatrixBase<DerivedT>& t_) {
  using Scalar = typename DerivedA::Scalar;
  using Real = typename DerivedA::RealScalar;
  auto& r = detail::writable(r_);
  auto& a = detail::writable(a_);
  auto& t = detail::writable(t_);
  detail::require_finite(a, "dtsqrf");

  const Eigen::Index b = a.cols();
  const Eigen::Index rows = a.rows();
  t.setZero();
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> x(rows + 1);
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> w(b);

  for (Eigen::Index c = 0; c < b; ++c) {
    x(0) = r(c, c);
    x.tail(rows) = a.col(c);
    Scalar tau;
    Real beta;
    x.makeHouseholderInPlace(tau, beta);
    r(c, c) = beta;
    a.col(c) = x.tail(rows);

    const Eigen::Index rest = b - c - 1;
    if (rest > 0) {
      w.head(rest) = r.row(c).tail(rest);
      w.head(rest).noalias() += a.col(c).transpose() * a.rightCols(rest);
      r.row(c).tail(rest) -= tau * w.head(rest);
      a.rightCols(rest).noalias() -= (tau * a.col(c)) * w.head(rest);
    }
    if (c > 0) {
      Eigen::Matrix<Scalar, Eigen::Dynamic, 1> y = a.leftCols(c).transpose() * a.col(c);
      t.col(c).head(c).noalias() = t.topLeftCorner(c, c).template triangularView<Eigen::Upper>() * y;
      t.col(c).head(c) *= -tau;
    }
    t(c, c) = tau;
  }
}

/// Applies the transposed reflector block produced by dtsqrf (`v`, `t`) to
/// the stacked pair [top; bottom].
template <typename DerivedV, typename DerivedT, typename DerivedTop, typename DerivedBottom>
void dssrft(const Eigen::MatrixBase<DerivedV>& v, const Eigen::MatrixBase<DerivedT>& t,
            const Eigen::MatrixBase<DerivedTop>& top_, const Eigen::MatrixBase<DerivedBottom>& bottom_) {
  using Scalar = typename DerivedTop::Scalar;
  auto& top = detail::writable(top_);
  auto& bottom = detail::writable(bottom_);
  detail::require_finite(bottom, "dssrft");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> w = top;
  w.noalias() += v.transpose() * bottom;
  w = t.template triangularView<Eigen::Upper>().transpose() * w;
  top -= w;
  bottom.noalias() -= v * w;
}

}  // namespace qr
