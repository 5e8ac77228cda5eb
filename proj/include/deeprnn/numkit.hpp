// SPDX-License-Identifier: Apache-2.0
//
// Dense vectors, row-major matrices and order-3 tensors, plus the handful of
// contractions the recurrent models need. Everything is templated on the
// scalar; the rest of the library instantiates it with double.
//
// Tensor axis convention: a Tensor3 of dims (d1, d2, d3) stores entry (i, j, k)
// at offset (i * d2 + j) * d3 + k. The mode-m product with a vector contracts
// axis m and keeps the remaining two axes in ascending order, so
//   mode_product(T, v, 1)(j, k) = sum_i T(i, j, k) v(i)
//   mode_product(T, v, 2)(i, k) = sum_j T(i, j, k) v(j)
//   mode_product(T, v, 3)(i, j) = sum_k T(i, j, k) v(k).
// For a recurrent weight tensor of dims (n, d, n) the bilinear term
// T x_1 h x_2 u is therefore the d3-vector mode_product(T, h, 1)^T u.
#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "deeprnn/rng.hpp"

namespace deeprnn {

using Index = Eigen::Index;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Vec = Vector<double>;
using Mat = Matrix<double>;

/// Raised when a computation produces or receives NaN / Inf.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <typename... Parts>
std::string concat(const Parts&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  return os.str();
}

}  // namespace detail

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& x) {
  return x.derived().array().isFinite().all();
}

template <typename Scalar>
class Tensor3 {
 public:
  using Dims = std::array<Index, 3>;

  Tensor3() = default;

  Tensor3(Index d1, Index d2, Index d3) : dims_{d1, d2, d3}, data_(Vector<Scalar>::Zero(d1 * d2 * d3)) {
    if (d1 < 0 || d2 < 0 || d3 < 0) {
      throw std::invalid_argument(detail::concat("Tensor3: negative dims (", d1, ", ", d2, ", ", d3, ")"));
    }
  }

  Tensor3(Dims dims, Vector<Scalar> data) : dims_(dims), data_(std::move(data)) {
    if (dims_[0] * dims_[1] * dims_[2] != data_.size()) {
      throw std::invalid_argument(detail::concat("Tensor3: ", dims_[0], "x", dims_[1], "x", dims_[2],
                                                 " does not match ", data_.size(), " entries"));
    }
  }

  static Tensor3 Zero(Index d1, Index d2, Index d3) { return Tensor3(d1, d2, d3); }

  /// Kronecker delta on the leading `count` indices: T(i, i, i) = 1 for i < count.
  static Tensor3 Delta(Index d1, Index d2, Index d3, Index count) {
    Tensor3 t(d1, d2, d3);
    for (Index i = 0; i < count; ++i) t(i, i, i) = Scalar(1);
    return t;
  }

  const Dims& dims() const { return dims_; }
  Index dim(int axis) const { return dims_[static_cast<std::size_t>(axis)]; }
  Index size() const { return data_.size(); }

  Scalar& operator()(Index i, Index j, Index k) { return data_[(i * dims_[1] + j) * dims_[2] + k]; }
  const Scalar& operator()(Index i, Index j, Index k) const { return data_[(i * dims_[1] + j) * dims_[2] + k]; }

  Vector<Scalar>& data() { return data_; }
  const Vector<Scalar>& data() const { return data_; }

  /// View as a (d1*d2) x d3 matrix; row i*d2 + j holds the fibre T(i, j, :).
  Eigen::Map<const Matrix<Scalar>> unfold_last() const {
    return Eigen::Map<const Matrix<Scalar>>(data_.data(), dims_[0] * dims_[1], dims_[2]);
  }
  Eigen::Map<Matrix<Scalar>> unfold_last() {
    return Eigen::Map<Matrix<Scalar>>(data_.data(), dims_[0] * dims_[1], dims_[2]);
  }

  void setZero() { data_.setZero(); }

  bool operator==(const Tensor3& other) const { return dims_ == other.dims_ && data_ == other.data_; }

 private:
  Dims dims_{0, 0, 0};
  Vector<Scalar> data_;
};

using Tensor3d = Tensor3<double>;

template <typename Scalar, typename Derived>
Matrix<Scalar> mode_product(const Tensor3<Scalar>& t, const Eigen::MatrixBase<Derived>& v_in, int mode) {
  const Vector<Scalar> v = v_in;
  if (mode < 1 || mode > 3) {
    throw std::invalid_argument(detail::concat("mode_product: mode must be 1, 2 or 3, got ", mode));
  }
  const auto& d = t.dims();
  const Index contracted = d[static_cast<std::size_t>(mode - 1)];
  if (v.size() != contracted) {
    throw std::invalid_argument(detail::concat("mode_product: tensor ", d[0], "x", d[1], "x", d[2], " mode ", mode,
                                               " has length ", contracted, " but vector has dim ", v.size()));
  }
  const Scalar* raw = t.data().data();
  switch (mode) {
    case 1: {
      Eigen::Map<const Matrix<Scalar>> m(raw, d[0], d[1] * d[2]);
      Matrix<Scalar> flat = v.transpose() * m;
      return Eigen::Map<const Matrix<Scalar>>(flat.data(), d[1], d[2]);
    }
    case 2: {
      Matrix<Scalar> out(d[0], d[2]);
      for (Index i = 0; i < d[0]; ++i) {
        Eigen::Map<const Matrix<Scalar>> slice(raw + i * d[1] * d[2], d[1], d[2]);
        out.row(i) = v.transpose() * slice;
      }
      return out;
    }
    default: {
      Vector<Scalar> flat = t.unfold_last() * v;
      return Eigen::Map<const Matrix<Scalar>>(flat.data(), d[0], d[1]);
    }
  }
}

/// The d3-vector sum_{i,j} T(i, j, k) h(i) u(j), i.e. T x_1 h x_2 u.
template <typename Scalar, typename DH, typename DU>
Vector<Scalar> bilinear(const Tensor3<Scalar>& t, const Eigen::MatrixBase<DH>& h, const Eigen::MatrixBase<DU>& u) {
  if (u.size() != t.dim(1)) {
    throw std::invalid_argument(
        detail::concat("bilinear: second-mode length ", t.dim(1), " but vector has dim ", u.size()));
  }
  return mode_product(t, h, 1).transpose() * u;
}

/// Full tensor sum_r a_r o b_r o c_r from factor matrices whose columns are a_r, b_r, c_r.
template <typename Scalar>
Tensor3<Scalar> cp_reconstruct(const Matrix<Scalar>& A, const Matrix<Scalar>& B, const Matrix<Scalar>& C) {
  if (A.cols() != B.cols() || A.cols() != C.cols()) {
    throw std::invalid_argument(detail::concat("cp_reconstruct: factor ranks differ (", A.cols(), ", ", B.cols(),
                                               ", ", C.cols(), ")"));
  }
  Tensor3<Scalar> t(A.rows(), B.rows(), C.rows());
  for (Index i = 0; i < A.rows(); ++i)
    for (Index j = 0; j < B.rows(); ++j)
      for (Index k = 0; k < C.rows(); ++k) {
        Scalar acc(0);
        for (Index r = 0; r < A.cols(); ++r) acc += A(i, r) * B(j, r) * C(k, r);
        t(i, j, k) = acc;
      }
  return t;
}

/// C diag(A^T h) B^T, the matrix that maps the layer input to the bilinear
/// contribution of a CP-factored tensor. Equals mode_product(cp_reconstruct(A, B, C), h, 1)^T.
template <typename Scalar, typename Derived>
Matrix<Scalar> cp_matrix(const Matrix<Scalar>& A, const Matrix<Scalar>& B, const Matrix<Scalar>& C,
                         const Eigen::MatrixBase<Derived>& h) {
  if (A.cols() != B.cols() || A.cols() != C.cols()) {
    throw std::invalid_argument(detail::concat("cp_matrix: factor ranks differ (", A.cols(), ", ", B.cols(), ", ",
                                               C.cols(), ")"));
  }
  if (h.size() != A.rows()) {
    throw std::invalid_argument(
        detail::concat("cp_matrix: A has ", A.rows(), " rows but state has dim ", h.size()));
  }
  const Vector<Scalar> w = A.transpose() * h;
  return C * w.asDiagonal() * B.transpose();
}

template <typename Scalar>
Matrix<Scalar> matmul(const Matrix<Scalar>& a, const Matrix<Scalar>& b) {
  if (a.cols() != b.rows()) {
    throw std::invalid_argument(
        detail::concat("matmul: ", a.rows(), "x", a.cols(), " times ", b.rows(), "x", b.cols()));
  }
  return a * b;
}

template <typename Scalar>
Vector<Scalar> matvec(const Matrix<Scalar>& m, const Vector<Scalar>& v) {
  if (m.cols() != v.size()) {
    throw std::invalid_argument(detail::concat("matvec: ", m.rows(), "x", m.cols(), " times vector of dim ", v.size()));
  }
  return m * v;
}

inline constexpr double kDefaultRankTol = 1e-9;

/// Number of singular values above tol * sigma_max.
template <typename Derived>
int rank(const Eigen::MatrixBase<Derived>& m, double tol = kDefaultRankTol) {
  if (!(tol > 0)) throw std::invalid_argument("rank: tolerance must be positive");
  if (!all_finite(m)) throw NumericalError("rank: matrix has non-finite entries");
  if (m.size() == 0) return 0;
  using Scalar = typename Derived::Scalar;
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> dense = m;
  Eigen::JacobiSVD<decltype(dense)> svd(dense);
  const auto& s = svd.singularValues();
  const Scalar smax = s.size() > 0 ? s(0) : Scalar(0);
  if (smax == Scalar(0)) return 0;
  int count = 0;
  for (Index i = 0; i < s.size(); ++i)
    if (s(i) > Scalar(tol) * smax) ++count;
  return count;
}

// Seeded fills. Entries are drawn in row-major order so streams are reproducible.

template <typename Scalar>
Matrix<Scalar> random_uniform(Index rows, Index cols, Rng& rng, double lo, double hi) {
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = Scalar(rng.uniform(lo, hi));
  return m;
}

template <typename Scalar>
Matrix<Scalar> random_normal(Index rows, Index cols, Rng& rng) {
  Matrix<Scalar> m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = Scalar(rng.normal());
  return m;
}

template <typename Scalar>
Vector<Scalar> random_uniform_vector(Index dim, Rng& rng, double lo, double hi) {
  Vector<Scalar> v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = Scalar(rng.uniform(lo, hi));
  return v;
}

template <typename Scalar>
Vector<Scalar> random_normal_vector(Index dim, Rng& rng) {
  Vector<Scalar> v(dim);
  for (Index i = 0; i < dim; ++i) v(i) = Scalar(rng.normal());
  return v;
}

template <typename Scalar>
Tensor3<Scalar> random_uniform_tensor(Index d1, Index d2, Index d3, Rng& rng, double lo, double hi) {
  Tensor3<Scalar> t(d1, d2, d3);
  for (Index i = 0; i < t.size(); ++i) t.data()(i) = Scalar(rng.uniform(lo, hi));
  return t;
}

template <typename Scalar>
Tensor3<Scalar> random_normal_tensor(Index d1, Index d2, Index d3, Rng& rng) {
  Tensor3<Scalar> t(d1, d2, d3);
  for (Index i = 0; i < t.size(); ++i) t.data()(i) = Scalar(rng.normal());
  return t;
}

}  // namespace deeprnn
