#pragma once

#include <cstddef>
#include <vector>

// Dense and banded float64 routines on row-major storage. Inner loops run
// through fgp::kernels so the SIMD dispatch applies here too.
namespace fgp::linalg {

// C = beta*C + alpha * op(A) * op(B); op = transpose when ta/tb set.
// A is (m x k) after op, B is (k x n) after op, C is (m x n).
void gemm(bool ta, bool tb, std::size_t m, std::size_t n, std::size_t k,
          double alpha, const double* a, std::size_t lda, const double* b,
          std::size_t ldb, double beta, double* c, std::size_t ldc);

// y = beta*y + alpha * op(A) * x
void gemv(bool ta, std::size_t rows, std::size_t cols, double alpha,
          const double* a, std::size_t lda, const double* x, double beta,
          double* y);

// Symmetric banded matrix, lower storage: band[j*(hb+1) + d] = A(j+d, j)
// for 0 <= d <= hb. n columns, half-bandwidth hb.
struct BandMatrix {
  std::size_t n = 0;
  std::size_t hb = 0;
  std::vector<double> band;

  void resize(std::size_t n_, std::size_t hb_) {
    n = n_;
    hb = hb_;
    band.assign(n * (hb + 1), 0.0);
  }
  double& at(std::size_t i, std::size_t j) { return band[j * (hb + 1) + (i - j)]; }
  double at(std::size_t i, std::size_t j) const { return band[j * (hb + 1) + (i - j)]; }
  void add_diagonal(double v);
  // y += A*x using the full symmetric matrix.
  void symv_add(const double* x, double* y) const;
};

// In-place banded Cholesky A = L L^T. Returns false if a pivot is not
// strictly positive (matrix not positive definite on this band).
bool band_cholesky(BandMatrix& a);

// Solves L L^T x = b with the factor from band_cholesky; b is overwritten.
void band_cholesky_solve(const BandMatrix& l, double* b);

// Dense LU with partial pivoting, row-major in place. Returns false when a
// pivot column is exactly singular.
bool lu_factor(double* a, std::size_t n, int* piv);
void lu_solve(const double* lu, std::size_t n, const int* piv, double* b);
// x := A^{-T} b using an existing factorization.
void lu_solve_transposed(const double* lu, std::size_t n, const int* piv, double* b);

}  // namespace fgp::linalg
