#include "fgp/linalg.hpp"

#include <algorithm>
#include <cmath>

#include "fgp/kernels.hpp"

namespace fgp::linalg {

void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double beta, double* c, std::size_t ldc) {
  for (std::size_t i = 0; i < m; ++i) {
    if (beta == 0.0) {
      std::fill(c + i * ldc, c + i * ldc + n, 0.0);
    } else if (beta != 1.0) {
      kernels::scal(beta, c + i * ldc, n);
    }
  }
  if (alpha == 0.0 || m == 0 || n == 0 || k == 0) return;

  if (!tb) {
    // C[i,:] += alpha*A'[i,l] * B[l,:] — contiguous axpy over rows of B.
    for (std::size_t i = 0; i < m; ++i) {
      double* crow = c + i * ldc;
      for (std::size_t l = 0; l < k; ++l) {
        const double aval = ta ? a[l * lda + i] : a[i * lda + l];
        if (aval != 0.0) kernels::axpy(alpha * aval, b + l * ldb, crow, n);
      }
    }
  } else if (!ta) {
    // C[i,j] += alpha * dot(A[i,:], B[j,:]) — contiguous dot.
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * lda;
      double* crow = c + i * ldc;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += alpha * kernels::dot(arow, b + j * ldb, k);
      }
    }
  } else {
    // Both transposed: strided access, plain loops.
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        double acc = 0.0;
        for (std::size_t l = 0; l < k; ++l) acc += a[l * lda + i] * b[j * ldb + l];
        c[i * ldc + j] += alpha * acc;
      }
    }
  }
}

void gemv(bool ta, std::size_t rows, std::size_t cols, double alpha,
          const double* a, std::size_t lda, const double* x, double beta,
          double* y) {
  const std::size_t ny = ta ? cols : rows;
  if (beta == 0.0) {
    std::fill(y, y + ny, 0.0);
  } else if (beta != 1.0) {
    kernels::scal(beta, y, ny);
  }
  if (alpha == 0.0) return;
  if (!ta) {
    for (std::size_t i = 0; i < rows; ++i) {
      y[i] += alpha * kernels::dot(a + i * lda, x, cols);
    }
  } else {
    for (std::size_t i = 0; i < rows; ++i) {
      if (x[i] != 0.0) kernels::axpy(alpha * x[i], a + i * lda, y, cols);
    }
  }
}

void BandMatrix::add_diagonal(double v) {
  for (std::size_t j = 0; j < n; ++j) band[j * (hb + 1)] += v;
}

void BandMatrix::symv_add(const double* x, double* y) const {
  for (std::size_t j = 0; j < n; ++j) {
    const double* col = band.data() + j * (hb + 1);
    y[j] += col[0] * x[j];
    const std::size_t dmax = std::min(hb, n - 1 - j);
    for (std::size_t d = 1; d <= dmax; ++d) {
      y[j + d] += col[d] * x[j];
      y[j] += col[d] * x[j + d];
    }
  }
}

bool band_cholesky(BandMatrix& a) {
  const std::size_t n = a.n, hb = a.hb, ld = hb + 1;
  double* b = a.band.data();
  for (std::size_t j = 0; j < n; ++j) {
    double* colj = b + j * ld;
    const std::size_t kmin = j > hb ? j - hb : 0;
    double diag = colj[0];
    for (std::size_t k = kmin; k < j; ++k) {
      const double ljk = b[k * ld + (j - k)];
      diag -= ljk * ljk;
    }
    if (!(diag > 0.0)) return false;
    const double ljj = std::sqrt(diag);
    colj[0] = ljj;
    const std::size_t imax = std::min(n - 1, j + hb);
    for (std::size_t i = j + 1; i <= imax; ++i) {
      double v = colj[i - j];
      const std::size_t kmin2 = i > hb ? i - hb : 0;
      for (std::size_t k = std::max(kmin, kmin2); k < j; ++k) {
        v -= b[k * ld + (i - k)] * b[k * ld + (j - k)];
      }
      colj[i - j] = v / ljj;
    }
  }
  return true;
}

void band_cholesky_solve(const BandMatrix& l, double* x) {
  const std::size_t n = l.n, hb = l.hb, ld = hb + 1;
  const double* b = l.band.data();
  // Forward: L y = x
  for (std::size_t j = 0; j < n; ++j) {
    x[j] /= b[j * ld];
    const std::size_t imax = std::min(n - 1, j + hb);
    const double xj = x[j];
    for (std::size_t i = j + 1; i <= imax; ++i) x[i] -= b[j * ld + (i - j)] * xj;
  }
  // Backward: L^T x = y
  for (std::size_t jj = n; jj-- > 0;) {
    const std::size_t imax = std::min(n - 1, jj + hb);
    double v = x[jj];
    for (std::size_t i = jj + 1; i <= imax; ++i) v -= b[jj * ld + (i - jj)] * x[i];
    x[jj] = v / b[jj * ld];
  }
}

bool lu_factor(double* a, std::size_t n, int* piv) {
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t p = col;
    double best = std::fabs(a[col * n + col]);
    for (std::size_t r = col + 1; r < n; ++r) {
      const double v = std::fabs(a[r * n + col]);
      if (v > best) {
        best = v;
        p = r;
      }
    }
    piv[col] = static_cast<int>(p);
    if (best == 0.0) return false;
    if (p != col) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a[col * n + j], a[p * n + j]);
    }
    const double pivval = a[col * n + col];
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / pivval;
      a[r * n + col] = f;
      if (f != 0.0) {
        kernels::axpy(-f, a + col * n + col + 1, a + r * n + col + 1, n - col - 1);
      }
    }
  }
  return true;
}

void lu_solve(const double* lu, std::size_t n, const int* piv, double* b) {
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = static_cast<std::size_t>(piv[i]);
    if (p != i) std::swap(b[i], b[p]);
  }
  for (std::size_t i = 1; i < n; ++i) {
    b[i] -= kernels::dot(lu + i * n, b, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double v = b[ii];
    for (std::size_t j = ii + 1; j < n; ++j) v -= lu[ii * n + j] * b[j];
    b[ii] = v / lu[ii * n + ii];
  }
}

void lu_solve_transposed(const double* lu, std::size_t n, const int* piv, double* b) {
  // A = P^T L U  =>  A^T x = b solved as U^T y = b, L^T z = y, x = P^T z.
  for (std::size_t i = 0; i < n; ++i) {
    double v = b[i];
    for (std::size_t j = 0; j < i; ++j) v -= lu[j * n + i] * b[j];
    b[i] = v / lu[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double v = b[ii];
    for (std::size_t j = ii + 1; j < n; ++j) v -= lu[j * n + ii] * b[j];
    b[ii] = v;
  }
  for (std::size_t ii = n; ii-- > 0;) {
    const auto p = static_cast<std::size_t>(piv[ii]);
    if (p != ii) std::swap(b[ii], b[p]);
  }
}

}  // namespace fgp::linalg
