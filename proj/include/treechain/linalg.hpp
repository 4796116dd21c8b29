#pragma once

// Dense matrices over an exact rational type or binary64, with the handful of
// decompositions the rest of the library needs: determinants (fraction-free
// Bareiss on integer-scaled rows in exact mode, partially pivoted LU in float
// mode), linear solves, minor deletion, characteristic polynomials, and a
// stationary-vector solve for stochastic matrices.

#include <algorithm>
#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "treechain/errors.hpp"
#include "treechain/rational.hpp"

namespace treechain {

template <typename S>
class Matrix {
 public:
  Matrix() : rows_(0), cols_(0) {}
  Matrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), data_(rows * cols, scalar_traits<S>::zero()) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m.at(i, i) = scalar_traits<S>::one();
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  S& at(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const S& at(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  Matrix without_row_col(std::size_t row, std::size_t col) const {
    Matrix m(rows_ - 1, cols_ - 1);
    for (std::size_t i = 0, mi = 0; i < rows_; ++i) {
      if (i == row) continue;
      for (std::size_t j = 0, mj = 0; j < cols_; ++j) {
        if (j == col) continue;
        m.at(mi, mj) = at(i, j);
        ++mj;
      }
      ++mi;
    }
    return m;
  }

  Matrix transposed() const {
    Matrix m(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) m.at(j, i) = at(i, j);
    return m;
  }

  friend Matrix operator-(const Matrix& a, const Matrix& b) {
    Matrix m(a.rows_, a.cols_);
    for (std::size_t k = 0; k < m.data_.size(); ++k) m.data_[k] = a.data_[k] - b.data_[k];
    return m;
  }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    Matrix m(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const S& aik = a.at(i, k);
        if (scalar_traits<S>::is_zero(aik)) continue;
        for (std::size_t j = 0; j < b.cols_; ++j) m.at(i, j) += aik * b.at(k, j);
      }
    return m;
  }

  std::vector<S> apply(const std::vector<S>& v) const {
    std::vector<S> out(rows_, scalar_traits<S>::zero());
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) out[i] += at(i, j) * v[j];
    return out;
  }

  // v^T M, the row-vector product used for balance checks.
  std::vector<S> apply_left(const std::vector<S>& v) const {
    std::vector<S> out(cols_, scalar_traits<S>::zero());
    for (std::size_t i = 0; i < rows_; ++i) {
      if (scalar_traits<S>::is_zero(v[i])) continue;
      for (std::size_t j = 0; j < cols_; ++j) out[j] += v[i] * at(i, j);
    }
    return out;
  }

 private:
  std::size_t rows_, cols_;
  std::vector<S> data_;
};

namespace detail {

// Exact determinant: clear denominators row by row, run fraction-free Bareiss
// on the integer matrix, then undo the row scalings.
inline BigRational determinant_exact(const Matrix<BigRational>& m) {
  const std::size_t n = m.rows();
  if (n == 0) return BigRational(1);
  std::vector<std::vector<BigInt>> a(n, std::vector<BigInt>(n));
  BigRational scale(1);
  for (std::size_t i = 0; i < n; ++i) {
    BigInt mult = 1;
    for (std::size_t j = 0; j < n; ++j)
      mult = boost::multiprecision::lcm(mult, denominator(m.at(i, j)));
    for (std::size_t j = 0; j < n; ++j) {
      const BigRational& q = m.at(i, j);
      a[i][j] = numerator(q) * (mult / denominator(q));
    }
    scale *= BigRational(mult);
  }
  BigInt prev = 1;
  int sign = 1;
  for (std::size_t k = 0; k + 1 < n; ++k) {
    if (a[k][k] == 0) {
      std::size_t pivot = k + 1;
      while (pivot < n && a[pivot][k] == 0) ++pivot;
      if (pivot == n) return BigRational(0);
      std::swap(a[k], a[pivot]);
      sign = -sign;
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      for (std::size_t j = k + 1; j < n; ++j)
        a[i][j] = (a[k][k] * a[i][j] - a[i][k] * a[k][j]) / prev;
      a[i][k] = 0;
    }
    prev = a[k][k];
  }
  return BigRational(sign * a[n - 1][n - 1]) / scale;
}

// Partially pivoted LU for binary64; reports the determinant together with an
// element-growth estimate so callers can flag ill-conditioned inputs.
struct LuFloat {
  std::vector<std::vector<double>> lu;
  std::vector<std::size_t> perm;
  double det = 1.0;
  double growth = 1.0;
  bool singular = false;
};

inline LuFloat lu_factor(const Matrix<double>& m) {
  const std::size_t n = m.rows();
  LuFloat f;
  f.lu.assign(n, std::vector<double>(n));
  f.perm.resize(n);
  double amax = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    f.perm[i] = i;
    for (std::size_t j = 0; j < n; ++j) {
      f.lu[i][j] = m.at(i, j);
      amax = std::max(amax, std::abs(f.lu[i][j]));
    }
  }
  if (amax == 0.0) amax = 1.0;
  double umax = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(f.lu[i][k]) > std::abs(f.lu[pivot][k])) pivot = i;
    if (pivot != k) {
      std::swap(f.lu[k], f.lu[pivot]);
      std::swap(f.perm[k], f.perm[pivot]);
      f.det = -f.det;
    }
    const double pk = f.lu[k][k];
    umax = std::max(umax, std::abs(pk));
    if (pk == 0.0) {
      f.singular = true;
      f.det = 0.0;
      return f;
    }
    f.det *= pk;
    for (std::size_t i = k + 1; i < n; ++i) {
      const double factor = f.lu[i][k] / pk;
      f.lu[i][k] = factor;
      for (std::size_t j = k + 1; j < n; ++j) {
        f.lu[i][j] -= factor * f.lu[k][j];
        umax = std::max(umax, std::abs(f.lu[i][j]));
      }
    }
  }
  f.growth = umax / amax;
  return f;
}

inline std::vector<double> lu_solve(const LuFloat& f, const std::vector<double>& b) {
  const std::size_t n = f.perm.size();
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = b[f.perm[i]];
  for (std::size_t i = 1; i < n; ++i)
    for (std::size_t j = 0; j < i; ++j) x[i] -= f.lu[i][j] * x[j];
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t j = i + 1; j < n; ++j) x[i] -= f.lu[i][j] * x[j];
    x[i] /= f.lu[i][i];
  }
  return x;
}

}  // namespace detail

template <typename S>
S determinant(const Matrix<S>& m) {
  if (m.rows() != m.cols()) throw DomainError("bad_matrix", "determinant of non-square matrix");
  if constexpr (scalar_traits<S>::is_exact) {
    return detail::determinant_exact(m);
  } else {
    if (m.rows() == 0) return 1.0;
    return detail::lu_factor(m).det;
  }
}

// Solves m x = b; throws DomainError("singular_matrix") when no unique
// solution exists (in float mode, when a pivot underflows to zero).
template <typename S>
std::vector<S> solve(const Matrix<S>& m, std::vector<S> b) {
  const std::size_t n = m.rows();
  if (m.cols() != n || b.size() != n)
    throw DomainError("bad_matrix", "solve requires square matrix and matching vector");
  if constexpr (scalar_traits<S>::is_exact) {
    Matrix<S> a = m;
    for (std::size_t k = 0; k < n; ++k) {
      std::size_t pivot = k;
      while (pivot < n && scalar_traits<S>::is_zero(a.at(pivot, k))) ++pivot;
      if (pivot == n) throw DomainError("singular_matrix", "exact solve met a zero pivot column");
      if (pivot != k) {
        for (std::size_t j = k; j < n; ++j) std::swap(a.at(k, j), a.at(pivot, j));
        std::swap(b[k], b[pivot]);
      }
      for (std::size_t i = k + 1; i < n; ++i) {
        if (scalar_traits<S>::is_zero(a.at(i, k))) continue;
        S factor = a.at(i, k) / a.at(k, k);
        for (std::size_t j = k; j < n; ++j) a.at(i, j) -= factor * a.at(k, j);
        b[i] -= factor * b[k];
      }
    }
    std::vector<S> x(n, scalar_traits<S>::zero());
    for (std::size_t i = n; i-- > 0;) {
      S acc = b[i];
      for (std::size_t j = i + 1; j < n; ++j) acc -= a.at(i, j) * x[j];
      x[i] = acc / a.at(i, i);
    }
    return x;
  } else {
    auto f = detail::lu_factor(m);
    if (f.singular) throw DomainError("singular_matrix", "LU met a zero pivot");
    return detail::lu_solve(f, b);
  }
}

// Coefficients c[0..n] of det(lambda I - m) = sum c[k] lambda^k, computed by
// the Faddeev-LeVerrier recurrence (division-free except by small integers,
// so it stays exact over rationals).
template <typename S>
std::vector<S> characteristic_polynomial(const Matrix<S>& m) {
  const std::size_t n = m.rows();
  if (m.cols() != n) throw DomainError("bad_matrix", "characteristic polynomial of non-square matrix");
  std::vector<S> c(n + 1, scalar_traits<S>::zero());
  c[n] = scalar_traits<S>::one();
  Matrix<S> mk = Matrix<S>::identity(n);
  for (std::size_t k = 1; k <= n; ++k) {
    mk = m * mk;
    S trace = scalar_traits<S>::zero();
    for (std::size_t i = 0; i < n; ++i) trace += mk.at(i, i);
    S ck = -(trace / scalar_traits<S>::from_int(static_cast<long long>(k)));
    c[n - k] = ck;
    for (std::size_t i = 0; i < n; ++i) mk.at(i, i) += ck;
  }
  return c;
}

template <typename S>
S evaluate_polynomial(const std::vector<S>& coeffs, const S& x) {
  S acc = scalar_traits<S>::zero();
  for (std::size_t k = coeffs.size(); k-- > 0;) acc = acc * x + coeffs[k];
  return acc;
}

template <typename S>
std::vector<S> differentiate_polynomial(const std::vector<S>& coeffs) {
  std::vector<S> d;
  for (std::size_t k = 1; k < coeffs.size(); ++k)
    d.push_back(coeffs[k] * scalar_traits<S>::from_int(static_cast<long long>(k)));
  return d;
}

// Left fixed vector of a row-stochastic matrix: solve (I - P)^T x = 0 with the
// first equation replaced by sum(x) = 1.  Each row of (I - P)^T sums to zero,
// so for an irreducible P the modified system is nonsingular and x is the
// stationary distribution.
template <typename S>
std::vector<S> stationary_from_nullspace(const Matrix<S>& p) {
  const std::size_t n = p.rows();
  Matrix<S> a = (Matrix<S>::identity(n) - p).transposed();
  std::vector<S> b(n, scalar_traits<S>::zero());
  for (std::size_t j = 0; j < n; ++j) a.at(0, j) = scalar_traits<S>::one();
  b[0] = scalar_traits<S>::one();
  return solve(a, std::move(b));
}

}  // namespace treechain
