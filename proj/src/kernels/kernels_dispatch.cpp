#include "fgp/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <cstring>

namespace fgp::kernels {

namespace {

using detail::Table;

Isa pick_startup_isa() {
  if (const char* env = std::getenv("FGPLAN_KERNELS")) {
    if (std::strcmp(env, "scalar") == 0) return Isa::Scalar;
    if (std::strcmp(env, "avx2") == 0 && cpu_has_avx2()) return Isa::Avx2;
  }
  return cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

std::atomic<const Table*>& table_slot() {
  static std::atomic<const Table*> slot{
      pick_startup_isa() == Isa::Avx2 ? &detail::avx2_table() : &detail::scalar_table()};
  return slot;
}

const Table& table() { return *table_slot().load(std::memory_order_relaxed); }

}  // namespace

bool cpu_has_avx2() {
#if defined(FGPLAN_HAVE_AVX2)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Isa active_isa() {
  return &table() == &detail::avx2_table() && cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
}

void force_isa(Isa isa) {
  if (isa == Isa::Avx2 && !cpu_has_avx2()) isa = Isa::Scalar;
  table_slot().store(isa == Isa::Avx2 ? &detail::avx2_table() : &detail::scalar_table(),
                     std::memory_order_relaxed);
}

const char* isa_name(Isa isa) { return isa == Isa::Avx2 ? "avx2" : "scalar"; }

double dot(const double* x, const double* y, std::size_t n) { return table().dot(x, y, n); }
double sum(const double* x, std::size_t n) { return table().sum(x, n); }
double sqnorm(const double* x, std::size_t n) { return table().sqnorm(x, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { table().axpy(a, x, y, n); }
void scal(double a, double* x, std::size_t n) { table().scal(a, x, n); }
void vadd(const double* x, const double* y, double* z, std::size_t n) { table().vadd(x, y, z, n); }
void vsub(const double* x, const double* y, double* z, std::size_t n) { table().vsub(x, y, z, n); }
void vmul(const double* x, const double* y, double* z, std::size_t n) { table().vmul(x, y, z, n); }
void vfma(const double* x, const double* y, double* z, std::size_t n) { table().vfma(x, y, z, n); }

}  // namespace fgp::kernels
