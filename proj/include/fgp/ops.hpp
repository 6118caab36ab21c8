#pragma once

#include <initializer_list>

#include "fgp/tape.hpp"

// Tensor operation layer. Every function evaluates eagerly and records onto
// the tape of its inputs (if any input is attached). Shapes must match
// exactly; the only broadcast is scalar <-> tensor for add/sub/mul/div.
namespace fgp::ad {

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);

Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);
Tensor solve(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& a);
Tensor norm(const Tensor& a);

Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor sin(const Tensor& a);
Tensor cos(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor bessel_i0(const Tensor& a);

Tensor concat(std::span<const Tensor> parts);
Tensor concat(std::initializer_list<Tensor> parts);
Tensor block(const Tensor& a, int r0, int c0, int rows, int cols);
inline Tensor slice_rows(const Tensor& a, int r0, int rows) {
  return block(a, r0, 0, rows, a.cols());
}

Tensor cross(const Tensor& a, const Tensor& b);
// Rotation vector (axis * angle) of a 3x3 rotation matrix.
Tensor rotation_vector(const Tensor& r);

// Scalar helpers.
inline Tensor dot(const Tensor& a, const Tensor& b) { return sum(mul(a, b)); }
inline Tensor sqnorm(const Tensor& a) { return sum(mul(a, a)); }

}  // namespace fgp::ad
