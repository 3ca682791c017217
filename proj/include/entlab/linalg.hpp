#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <utility>
#include <vector>

#include "entlab/errors.hpp"

// Dense linear algebra kept deliberately small: a row-major matrix, the
// classic Householder + implicit-shift QL symmetric eigensolver, and complex
// shifted solvers (tridiagonal with partial pivoting for the d=1 hot path,
// dense LU for everything else).

namespace entlab::linalg {

using cplx = std::complex<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return data_.empty(); }

  double* row_ptr(std::size_t i) { return data_.data() + i * cols_; }
  const double* row_ptr(std::size_t i) const {
    return data_.data() + i * cols_;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : data_) m = std::max(m, std::abs(v));
    return m;
  }

  Matrix transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  bool operator==(const Matrix& other) const {
    return rows_ == other.rows_ && cols_ == other.cols_ &&
           data_ == other.data_;
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

inline Matrix multiply(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw DomainError("multiply: inner dimensions disagree");
  }
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      const double* brow = b.row_ptr(k);
      double* crow = c.row_ptr(i);
      for (std::size_t j = 0; j < b.cols(); ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

inline Matrix principal_submatrix(const Matrix& a, std::span<const int> idx) {
  Matrix s(idx.size(), idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    for (std::size_t j = 0; j < idx.size(); ++j) {
      s(i, j) = a(static_cast<std::size_t>(idx[i]),
                  static_cast<std::size_t>(idx[j]));
    }
  }
  return s;
}

namespace detail {

// Householder reduction of a symmetric matrix to tridiagonal form, with
// accumulation of the orthogonal transform (EISPACK tred2 lineage). On exit
// `a` holds Q with A = Q T Q^T (eigenvector basis in columns), `d` the
// diagonal of T and `e` the subdiagonal (e[i] couples i-1 and i; e[0]=0).
inline void householder_tridiagonalize(Matrix& a, std::vector<double>& d,
                                       std::vector<double>& e) {
  const std::size_t n = a.rows();
  d.assign(n, 0.0);
  e.assign(n, 0.0);

  for (std::size_t i = n - 1; i >= 1; --i) {
    const std::size_t l = i - 1;
    double h = 0.0;
    double scale = 0.0;
    if (l > 0) {
      for (std::size_t k = 0; k <= l; ++k) scale += std::abs(a(i, k));
      if (scale == 0.0) {
        e[i] = a(i, l);
      } else {
        for (std::size_t k = 0; k <= l; ++k) {
          a(i, k) /= scale;
          h += a(i, k) * a(i, k);
        }
        double f = a(i, l);
        double g = f >= 0.0 ? -std::sqrt(h) : std::sqrt(h);
        e[i] = scale * g;
        h -= f * g;
        a(i, l) = f - g;
        f = 0.0;
        for (std::size_t j = 0; j <= l; ++j) {
          a(j, i) = a(i, j) / h;
          g = 0.0;
          for (std::size_t k = 0; k <= j; ++k) g += a(j, k) * a(i, k);
          for (std::size_t k = j + 1; k <= l; ++k) g += a(k, j) * a(i, k);
          e[j] = g / h;
          f += e[j] * a(i, j);
        }
        const double hh = f / (h + h);
        for (std::size_t j = 0; j <= l; ++j) {
          f = a(i, j);
          e[j] = g = e[j] - hh * f;
          for (std::size_t k = 0; k <= j; ++k)
            a(j, k) -= f * e[k] + g * a(i, k);
        }
      }
    } else {
      e[i] = a(i, l);
    }
    d[i] = h;
  }
  d[0] = 0.0;
  e[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (d[i] != 0.0) {
      for (std::size_t j = 0; j < i; ++j) {
        double g = 0.0;
        for (std::size_t k = 0; k < i; ++k) g += a(i, k) * a(k, j);
        for (std::size_t k = 0; k < i; ++k) a(k, j) -= g * a(k, i);
      }
    }
    d[i] = a(i, i);
    a(i, i) = 1.0;
    for (std::size_t j = 0; j < i; ++j) a(j, i) = a(i, j) = 0.0;
  }
}

// Implicit-shift QL iteration on a symmetric tridiagonal matrix (EISPACK
// tql2 lineage). `d` holds the diagonal, `e` the subdiagonal in positions
// 1..n-1 (e[0] ignored). If `vectors_rows` is non-null its ROWS are rotated
// along; start it as the identity (or the tridiagonalizing basis transposed)
// to accumulate eigenvectors. Rows keep eigenvector components contiguous,
// which is what makes the rotation loop vectorize.
inline void tridiagonal_ql(std::vector<double>& d, std::vector<double>& e,
                           Matrix* vectors_rows, int max_iterations = 50) {
  const std::size_t n = d.size();
  if (n == 0) return;
  const std::size_t ncols = vectors_rows ? vectors_rows->cols() : 0;

  for (std::size_t i = 1; i < n; ++i) e[i - 1] = e[i];
  e[n - 1] = 0.0;

  for (std::size_t l = 0; l < n; ++l) {
    int iter = 0;
    std::size_t m;
    do {
      for (m = l; m + 1 < n; ++m) {
        const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
        if (std::abs(e[m]) <= std::numeric_limits<double>::epsilon() * dd)
          break;
      }
      if (m != l) {
        if (iter++ == max_iterations) {
          throw NumericalError(
              "tridiagonal_ql: eigenvalue iteration did not converge", n,
              max_iterations);
        }
        double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
        double r = std::hypot(g, 1.0);
        g = d[m] - d[l] + e[l] / (g + std::copysign(r, g));
        double s = 1.0;
        double c = 1.0;
        double p = 0.0;
        bool underflowed = false;
        for (std::size_t i = m; i-- > l;) {
          double f = s * e[i];
          const double b = c * e[i];
          r = std::hypot(f, g);
          e[i + 1] = r;
          if (r == 0.0) {
            d[i + 1] -= p;
            e[m] = 0.0;
            underflowed = true;
            break;
          }
          s = f / r;
          c = g / r;
          g = d[i + 1] - p;
          r = (d[i] - g) * s + 2.0 * c * b;
          p = s * r;
          d[i + 1] = g + p;
          g = c * r - b;
          if (vectors_rows) {
            double* vi = vectors_rows->row_ptr(i);
            double* vi1 = vectors_rows->row_ptr(i + 1);
            for (std::size_t k = 0; k < ncols; ++k) {
              f = vi1[k];
              vi1[k] = s * vi[k] + c * f;
              vi[k] = c * vi[k] - s * f;
            }
          }
        }
        if (underflowed) continue;
        d[l] -= p;
        e[l] = g;
        e[m] = 0.0;
      }
    } while (m != l);
  }
}

// Sort eigenvalues ascending, permute the eigenvector rows along, and fix
// each eigenvector's sign so its largest-magnitude entry (first such entry
// on ties) is positive. This makes eigendecompositions bit-reproducible.
inline void sort_and_fix_signs(std::vector<double>& d, Matrix* vectors_rows) {
  const std::size_t n = d.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&d](std::size_t a, std::size_t b) { return d[a] < d[b]; });

  std::vector<double> sorted_d(n);
  for (std::size_t k = 0; k < n; ++k) sorted_d[k] = d[order[k]];
  d = std::move(sorted_d);

  if (!vectors_rows) return;
  const std::size_t ncols = vectors_rows->cols();
  Matrix sorted(n, ncols);
  for (std::size_t k = 0; k < n; ++k) {
    const double* src = vectors_rows->row_ptr(order[k]);
    double* dst = sorted.row_ptr(k);
    std::size_t imax = 0;
    double vmax = 0.0;
    for (std::size_t j = 0; j < ncols; ++j) {
      const double av = std::abs(src[j]);
      if (av > vmax) {
        vmax = av;
        imax = j;
      }
    }
    const double sign = src[imax] < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < ncols; ++j) dst[j] = sign * src[j];
  }
  *vectors_rows = std::move(sorted);
}

}  // namespace detail

// Eigendecomposition of a symmetric tridiagonal matrix given by its diagonal
// and subdiagonal (off[i] couples i and i+1). Returns ascending eigenvalues;
// if `vectors_rows` is non-null it receives one eigenvector per row.
inline std::vector<double> eig_symmetric_tridiagonal(
    std::span<const double> diag, std::span<const double> off,
    Matrix* vectors_rows) {
  const std::size_t n = diag.size();
  if (n == 0) throw DomainError("eig_symmetric_tridiagonal: empty matrix");
  if (off.size() + 1 != n) {
    throw DomainError(
        "eig_symmetric_tridiagonal: off-diagonal must have length n-1");
  }
  std::vector<double> d(diag.begin(), diag.end());
  std::vector<double> e(n, 0.0);
  for (std::size_t i = 1; i < n; ++i) e[i] = off[i - 1];
  if (vectors_rows) *vectors_rows = Matrix::identity(n);
  detail::tridiagonal_ql(d, e, vectors_rows);
  detail::sort_and_fix_signs(d, vectors_rows);
  return d;
}

// Eigendecomposition of a dense symmetric matrix. Only the values are
// computed when `vectors_rows` is null.
inline std::vector<double> eig_symmetric_dense(const Matrix& a,
                                               Matrix* vectors_rows) {
  const std::size_t n = a.rows();
  if (n == 0) throw DomainError("eig_symmetric_dense: empty matrix");
  if (a.cols() != n) throw DomainError("eig_symmetric_dense: matrix not square");
  Matrix work = a;
  std::vector<double> d;
  std::vector<double> e;
  detail::householder_tridiagonalize(work, d, e);
  if (vectors_rows) {
    *vectors_rows = work.transposed();
    detail::tridiagonal_ql(d, e, vectors_rows);
  } else {
    detail::tridiagonal_ql(d, e, nullptr);
  }
  detail::sort_and_fix_signs(d, vectors_rows);
  return d;
}

// Solve (T - z) x = rhs for a real symmetric tridiagonal T and complex shift
// z, by banded LU with partial pivoting (LAPACK zgtsv lineage; pivoting
// creates one extra superdiagonal). Stable for the near-real shifts the
// resolvent code uses.
inline std::vector<cplx> solve_tridiagonal_shifted(std::span<const double> diag,
                                                   std::span<const double> off,
                                                   cplx z,
                                                   std::vector<cplx> rhs) {
  const std::size_t n = diag.size();
  if (n == 0) throw DomainError("solve_tridiagonal_shifted: empty system");
  if (off.size() + 1 != n || rhs.size() != n) {
    throw DomainError("solve_tridiagonal_shifted: size mismatch");
  }

  std::vector<cplx> dl(off.begin(), off.end());
  std::vector<cplx> du(off.begin(), off.end());
  std::vector<cplx> dm(n);
  std::vector<cplx> du2(n > 2 ? n - 2 : 0, cplx(0.0, 0.0));
  for (std::size_t i = 0; i < n; ++i) dm[i] = cplx(diag[i], 0.0) - z;

  const auto cabs1 = [](cplx v) {
    return std::abs(v.real()) + std::abs(v.imag());
  };

  for (std::size_t i = 0; i + 1 < n; ++i) {
    if (cabs1(dm[i]) >= cabs1(dl[i])) {
      if (dm[i] == cplx(0.0, 0.0)) {
        throw NumericalError("solve_tridiagonal_shifted: singular pivot", n);
      }
      const cplx mult = dl[i] / dm[i];
      dm[i + 1] -= mult * du[i];
      rhs[i + 1] -= mult * rhs[i];
      if (i + 2 < n) du2[i] = cplx(0.0, 0.0);
    } else {
      const cplx mult = dm[i] / dl[i];
      dm[i] = dl[i];
      const cplx temp = dm[i + 1];
      dm[i + 1] = du[i] - mult * temp;
      if (i + 2 < n) {
        du2[i] = du[i + 1];
        du[i + 1] = -mult * du2[i];
      }
      du[i] = temp;
      const cplx btmp = rhs[i];
      rhs[i] = rhs[i + 1];
      rhs[i + 1] = btmp - mult * rhs[i + 1];
    }
  }
  if (dm[n - 1] == cplx(0.0, 0.0)) {
    throw NumericalError("solve_tridiagonal_shifted: singular pivot", n);
  }

  rhs[n - 1] /= dm[n - 1];
  if (n > 1) {
    rhs[n - 2] = (rhs[n - 2] - du[n - 2] * rhs[n - 1]) / dm[n - 2];
  }
  for (std::size_t i = n - 1; i-- > 0;) {
    if (i + 2 >= n) continue;
    rhs[i] = (rhs[i] - du[i] * rhs[i + 1] - du2[i] * rhs[i + 2]) / dm[i];
  }
  return rhs;
}

// LU factorization with partial pivoting of (A - z) for a real square A and
// complex shift z. Factor once, solve many right-hand sides.
class ComplexLU {
 public:
  ComplexLU(const Matrix& a, cplx z) : n_(a.rows()), lu_(n_ * n_), piv_(n_) {
    if (a.cols() != n_ || n_ == 0) {
      throw DomainError("ComplexLU: matrix must be square and non-empty");
    }
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = 0; j < n_; ++j) {
        lu_[i * n_ + j] = cplx(a(i, j), 0.0) - (i == j ? z : cplx(0.0, 0.0));
      }
    }
    for (std::size_t col = 0; col < n_; ++col) {
      std::size_t pivot = col;
      double best = std::abs(lu_[col * n_ + col].real()) +
                    std::abs(lu_[col * n_ + col].imag());
      for (std::size_t r = col + 1; r < n_; ++r) {
        const cplx v = lu_[r * n_ + col];
        const double mag = std::abs(v.real()) + std::abs(v.imag());
        if (mag > best) {
          best = mag;
          pivot = r;
        }
      }
      if (best == 0.0) {
        throw NumericalError("ComplexLU: singular matrix", n_);
      }
      piv_[col] = pivot;
      if (pivot != col) {
        for (std::size_t j = 0; j < n_; ++j) {
          std::swap(lu_[col * n_ + j], lu_[pivot * n_ + j]);
        }
      }
      const cplx inv_pivot = cplx(1.0, 0.0) / lu_[col * n_ + col];
      for (std::size_t r = col + 1; r < n_; ++r) {
        const cplx factor = lu_[r * n_ + col] * inv_pivot;
        lu_[r * n_ + col] = factor;
        if (factor == cplx(0.0, 0.0)) continue;
        const cplx* src = &lu_[col * n_ + col + 1];
        cplx* dst = &lu_[r * n_ + col + 1];
        for (std::size_t j = col + 1; j < n_; ++j) {
          *dst++ -= factor * *src++;
        }
      }
    }
  }

  std::vector<cplx> solve(std::vector<cplx> b) const {
    if (b.size() != n_) throw DomainError("ComplexLU::solve: size mismatch");
    for (std::size_t i = 0; i < n_; ++i) {
      if (piv_[i] != i) std::swap(b[i], b[piv_[i]]);
    }
    for (std::size_t i = 1; i < n_; ++i) {
      cplx sum = b[i];
      const cplx* row = &lu_[i * n_];
      for (std::size_t j = 0; j < i; ++j) sum -= row[j] * b[j];
      b[i] = sum;
    }
    for (std::size_t i = n_; i-- > 0;) {
      cplx sum = b[i];
      const cplx* row = &lu_[i * n_];
      for (std::size_t j = i + 1; j < n_; ++j) sum -= row[j] * b[j];
      b[i] = sum / row[i];
    }
    return b;
  }

  std::size_t size() const { return n_; }

 private:
  std::size_t n_;
  std::vector<cplx> lu_;
  std::vector<std::size_t> piv_;
};

}  // namespace entlab::linalg
