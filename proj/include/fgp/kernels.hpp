#pragma once

#include <cstddef>

// Flat float64 array kernels. Every kernel has a scalar reference
// implementation and an AVX2+FMA variant; the active variant is picked once
// at startup from CPUID and can be overridden with force_isa() or the
// FGPLAN_KERNELS environment variable ("scalar" | "avx2").
//
// Elementwise kernels (vadd/vsub/vmul/vfma/axpy/scal) are bit-identical
// across variants. Reductions (dot, sum, sqnorm) reassociate and may differ
// in the last ulps; callers must not rely on a particular summation order.
namespace fgp::kernels {

enum class Isa { Scalar, Avx2 };

Isa active_isa();
bool cpu_has_avx2();
void force_isa(Isa isa);
const char* isa_name(Isa isa);

double dot(const double* x, const double* y, std::size_t n);
double sum(const double* x, std::size_t n);
double sqnorm(const double* x, std::size_t n);

// y += a * x
void axpy(double a, const double* x, double* y, std::size_t n);
// x *= a
void scal(double a, double* x, std::size_t n);

void vadd(const double* x, const double* y, double* z, std::size_t n);
void vsub(const double* x, const double* y, double* z, std::size_t n);
void vmul(const double* x, const double* y, double* z, std::size_t n);
// z += x * y (elementwise)
void vfma(const double* x, const double* y, double* z, std::size_t n);

namespace detail {

struct Table {
  double (*dot)(const double*, const double*, std::size_t);
  double (*sum)(const double*, std::size_t);
  double (*sqnorm)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*scal)(double, double*, std::size_t);
  void (*vadd)(const double*, const double*, double*, std::size_t);
  void (*vsub)(const double*, const double*, double*, std::size_t);
  void (*vmul)(const double*, const double*, double*, std::size_t);
  void (*vfma)(const double*, const double*, double*, std::size_t);
};

const Table& scalar_table();
const Table& avx2_table();

}  // namespace detail

}  // namespace fgp::kernels
