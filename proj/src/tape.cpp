#include "fgp/tape.hpp"

#include <algorithm>
#include <cmath>

#include "fgp/kernels.hpp"
#include "fgp/linalg.hpp"
#include "fgp/ops.hpp"

namespace fgp::ad {

const char* op_name(Op op) {
  switch (op) {
    case Op::Leaf: return "leaf";
    case Op::Add: return "add";
    case Op::Sub: return "sub";
    case Op::Mul: return "mul";
    case Op::Div: return "div";
    case Op::Neg: return "neg";
    case Op::Scale: return "scale";
    case Op::AddC: return "add_const";
    case Op::MatMul: return "matmul";
    case Op::Solve: return "solve";
    case Op::Sum: return "sum";
    case Op::Norm: return "norm";
    case Op::Log: return "log";
    case Op::Exp: return "exp";
    case Op::Sigmoid: return "sigmoid";
    case Op::Sin: return "sin";
    case Op::Cos: return "cos";
    case Op::Sqrt: return "sqrt";
    case Op::Relu: return "relu";
    case Op::Concat: return "concat";
    case Op::Block: return "block";
    case Op::Cross: return "cross";
    case Op::RotVec: return "rotation_vector";
    case Op::BesselI0: return "bessel_i0";
    case Op::Custom: return "custom";
  }
  return "?";
}

namespace {

[[noreturn]] void shape_fail(Op op, const Shape& a) {
  throw Error(std::string(op_name(op)) + ": invalid input shape " + a.str());
}

[[noreturn]] void shape_fail(Op op, const Shape& a, const Shape& b) {
  throw Error(std::string(op_name(op)) + ": incompatible shapes " + a.str() + " and " + b.str());
}

double sigmoid_val(double x) {
  if (x >= 0.0) {
    const double e = std::exp(-x);
    return 1.0 / (1.0 + e);
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// theta / (2 sin theta), finite at 0.
double half_angle_over_sin(double theta) {
  if (theta < 1e-6) return 0.5 + theta * theta / 12.0;
  return theta / (2.0 * std::sin(theta));
}

double half_angle_over_sin_deriv(double theta) {
  if (theta < 1e-4) return theta / 6.0 + 7.0 * theta * theta * theta / 90.0;
  const double s = std::sin(theta);
  return (s - theta * std::cos(theta)) / (2.0 * s * s);
}

struct BinaryLayout {
  Shape out;
  bool a_scalar;
  bool b_scalar;
};

BinaryLayout binary_layout(Op op, const Shape& a, const Shape& b) {
  if (a == b) return {a, false, false};
  if (a.is_scalar()) return {b, true, false};
  if (b.is_scalar()) return {a, false, true};
  shape_fail(op, a, b);
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward evaluation

namespace {

struct Evaluated {
  std::shared_ptr<Storage> out;
  // Solve keeps its factorization for the tape payload.
  std::vector<double> lu;
  std::vector<int> piv;
};

Evaluated eval_op(Op op, std::span<const Tensor> in, double c, const int aux[4]) {
  Evaluated ev;
  auto out = std::make_shared<Storage>();
  auto alloc = [&](Shape s) {
    out->shape = s;
    out->v.assign(s.size(), 0.0);
  };

  switch (op) {
    case Op::Add:
    case Op::Sub:
    case Op::Mul:
    case Op::Div: {
      const auto& a = in[0];
      const auto& b = in[1];
      const auto lay = binary_layout(op, a.shape(), b.shape());
      alloc(lay.out);
      const std::size_t n = lay.out.size();
      double* z = out->v.data();
      if (!lay.a_scalar && !lay.b_scalar) {
        switch (op) {
          case Op::Add: kernels::vadd(a.data(), b.data(), z, n); break;
          case Op::Sub: kernels::vsub(a.data(), b.data(), z, n); break;
          case Op::Mul: kernels::vmul(a.data(), b.data(), z, n); break;
          default:
            for (std::size_t i = 0; i < n; ++i) z[i] = a[i] / b[i];
        }
      } else {
        for (std::size_t i = 0; i < n; ++i) {
          const double av = lay.a_scalar ? a[0] : a[i];
          const double bv = lay.b_scalar ? b[0] : b[i];
          switch (op) {
            case Op::Add: z[i] = av + bv; break;
            case Op::Sub: z[i] = av - bv; break;
            case Op::Mul: z[i] = av * bv; break;
            default: z[i] = av / bv;
          }
        }
      }
      break;
    }
    case Op::Neg: {
      alloc(in[0].shape());
      const std::size_t n = out->v.size();
      for (std::size_t i = 0; i < n; ++i) out->v[i] = -in[0][i];
      break;
    }
    case Op::Scale: {
      alloc(in[0].shape());
      std::copy(in[0].values().begin(), in[0].values().end(), out->v.begin());
      kernels::scal(c, out->v.data(), out->v.size());
      break;
    }
    case Op::AddC: {
      alloc(in[0].shape());
      const std::size_t n = out->v.size();
      for (std::size_t i = 0; i < n; ++i) out->v[i] = in[0][i] + c;
      break;
    }
    case Op::MatMul: {
      const bool ta = aux[0] != 0, tb = aux[1] != 0;
      const auto& a = in[0];
      const auto& b = in[1];
      const int m = ta ? a.cols() : a.rows();
      const int k = ta ? a.rows() : a.cols();
      const int kb = tb ? b.cols() : b.rows();
      const int n = tb ? b.rows() : b.cols();
      if (k != kb) shape_fail(op, a.shape(), b.shape());
      alloc({m, n});
      linalg::gemm(ta, tb, m, n, k, 1.0, a.data(), a.cols(), b.data(), b.cols(), 0.0,
                   out->v.data(), n);
      break;
    }
    case Op::Solve: {
      const auto& a = in[0];
      const auto& b = in[1];
      if (a.rows() != a.cols() || b.cols() != 1 || b.rows() != a.rows())
        shape_fail(op, a.shape(), b.shape());
      const std::size_t n = static_cast<std::size_t>(a.rows());
      ev.lu.assign(a.values().begin(), a.values().end());
      ev.piv.assign(n, 0);
      if (!linalg::lu_factor(ev.lu.data(), n, ev.piv.data()))
        throw Error("solve: singular matrix");
      alloc(b.shape());
      std::copy(b.values().begin(), b.values().end(), out->v.begin());
      linalg::lu_solve(ev.lu.data(), n, ev.piv.data(), out->v.data());
      break;
    }
    case Op::Sum: {
      alloc({1, 1});
      out->v[0] = kernels::sum(in[0].data(), in[0].size());
      break;
    }
    case Op::Norm: {
      alloc({1, 1});
      out->v[0] = std::sqrt(kernels::sqnorm(in[0].data(), in[0].size()));
      break;
    }
    case Op::Log:
    case Op::Exp:
    case Op::Sigmoid:
    case Op::Sin:
    case Op::Cos:
    case Op::Sqrt:
    case Op::Relu:
    case Op::BesselI0: {
      alloc(in[0].shape());
      const std::size_t n = out->v.size();
      for (std::size_t i = 0; i < n; ++i) {
        const double x = in[0][i];
        switch (op) {
          case Op::Log:
            if (!(x > 0.0)) throw Error("log: non-positive argument");
            out->v[i] = std::log(x);
            break;
          case Op::Exp: out->v[i] = std::exp(x); break;
          case Op::Sigmoid: out->v[i] = sigmoid_val(x); break;
          case Op::Sin: out->v[i] = std::sin(x); break;
          case Op::Cos: out->v[i] = std::cos(x); break;
          case Op::Sqrt:
            if (x < 0.0) throw Error("sqrt: negative argument");
            out->v[i] = std::sqrt(x);
            break;
          case Op::Relu: out->v[i] = x > 0.0 ? x : 0.0; break;
          default: out->v[i] = std::cyl_bessel_i(0.0, x);
        }
      }
      break;
    }
    case Op::Concat: {
      if (in.empty()) throw Error("concat: no inputs");
      const int cols = in[0].cols();
      int rows = 0;
      for (const auto& t : in) {
        if (t.cols() != cols) shape_fail(op, in[0].shape(), t.shape());
        rows += t.rows();
      }
      alloc({rows, cols});
      double* dst = out->v.data();
      for (const auto& t : in) {
        std::copy(t.values().begin(), t.values().end(), dst);
        dst += t.size();
      }
      break;
    }
    case Op::Block: {
      const int r0 = aux[0], c0 = aux[1], rows = aux[2], cols = aux[3];
      const auto& a = in[0];
      if (r0 < 0 || c0 < 0 || rows < 1 || cols < 1 || r0 + rows > a.rows() ||
          c0 + cols > a.cols())
        throw Error(std::string("block: range (") + std::to_string(r0) + "," +
                    std::to_string(c0) + ")+" + Shape{rows, cols}.str() +
                    " outside tensor " + a.shape().str());
      alloc({rows, cols});
      for (int r = 0; r < rows; ++r) {
        const double* src = a.data() + static_cast<std::size_t>(r0 + r) * a.cols() + c0;
        std::copy(src, src + cols, out->v.data() + static_cast<std::size_t>(r) * cols);
      }
      break;
    }
    case Op::Cross: {
      const auto& a = in[0];
      const auto& b = in[1];
      if (a.size() != 3 || b.size() != 3) shape_fail(op, a.shape(), b.shape());
      alloc({3, 1});
      out->v[0] = a[1] * b[2] - a[2] * b[1];
      out->v[1] = a[2] * b[0] - a[0] * b[2];
      out->v[2] = a[0] * b[1] - a[1] * b[0];
      break;
    }
    case Op::RotVec: {
      const auto& r = in[0];
      if (r.rows() != 3 || r.cols() != 3) shape_fail(op, r.shape());
      const double tr = r.at(0, 0) + r.at(1, 1) + r.at(2, 2);
      const double u = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
      const double theta = std::acos(u);
      alloc({3, 1});
      const double w0 = r.at(2, 1) - r.at(1, 2);
      const double w1 = r.at(0, 2) - r.at(2, 0);
      const double w2 = r.at(1, 0) - r.at(0, 1);
      if (theta > M_PI - 1e-6) {
        // Axis from the dominant diagonal of (R + I); w only fixes signs here.
        double q[3] = {std::sqrt(std::max(0.0, (r.at(0, 0) + 1.0) / 2.0)),
                       std::sqrt(std::max(0.0, (r.at(1, 1) + 1.0) / 2.0)),
                       std::sqrt(std::max(0.0, (r.at(2, 2) + 1.0) / 2.0))};
        const double w[3] = {w0, w1, w2};
        for (int i = 0; i < 3; ++i)
          if (w[i] < 0.0) q[i] = -q[i];
        const double qn = std::sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2]);
        for (int i = 0; i < 3; ++i) out->v[i] = qn > 0.0 ? theta * q[i] / qn : 0.0;
      } else {
        const double f = half_angle_over_sin(theta);
        out->v[0] = f * w0;
        out->v[1] = f * w1;
        out->v[2] = f * w2;
      }
      break;
    }
    case Op::Leaf:
    case Op::Custom:
      throw Error(std::string(op_name(op)) + ": not a recordable primitive");
  }
  ev.out = std::move(out);
  return ev;
}

}  // namespace

Tensor record(Op op, std::span<const Tensor> inputs, double c, int aux0, int aux1, int aux2,
              int aux3) {
  const int aux[4] = {aux0, aux1, aux2, aux3};
  Evaluated ev = eval_op(op, inputs, c, aux);

  Tape* tape = nullptr;
  for (const auto& t : inputs) {
    if (t.tape() != nullptr) {
      if (tape != nullptr && tape != t.tape())
        throw Error(std::string(op_name(op)) + ": inputs belong to different tapes");
      tape = t.tape();
    }
  }
  if (tape == nullptr) return Tensor(std::move(ev.out), nullptr, -1);
  return tape->emplace(op, inputs, std::move(ev.out), c, aux0, aux1, aux2, aux3,
                       std::move(ev.lu), std::move(ev.piv));
}

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::leaf(const Tensor& value, bool requires_grad) {
  if (value.tape() != nullptr) throw Error("leaf: tensor is already attached to a tape");
  Node n;
  n.op = Op::Leaf;
  n.needs_grad = requires_grad;
  n.out = value.storage();
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  interned_[value.storage().get()] = id;
  return Tensor(value.storage(), this, id);
}

int Tape::intern(const Tensor& t) {
  if (t.tape() == this) return t.node();
  if (t.tape() != nullptr) throw Error("tensor belongs to a different tape");
  if (auto it = interned_.find(t.storage().get()); it != interned_.end()) return it->second;
  Node n;
  n.op = Op::Leaf;
  n.needs_grad = false;
  n.out = t.storage();
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  interned_[t.storage().get()] = id;
  return id;
}

Tensor Tape::emplace(Op op, std::span<const Tensor> inputs, std::shared_ptr<const Storage> out,
                     double c, int aux0, int aux1, int aux2, int aux3, std::vector<double> lu,
                     std::vector<int> piv) {
  Node n;
  n.op = op;
  n.c = c;
  n.aux[0] = aux0;
  n.aux[1] = aux1;
  n.aux[2] = aux2;
  n.aux[3] = aux3;
  n.in.reserve(inputs.size());
  for (const auto& t : inputs) {
    const int id = intern(t);
    n.in.push_back(id);
    n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
  }
  if (op == Op::Solve) {
    n.aux[0] = static_cast<int>(lu_payloads_.size());
    lu_payloads_.push_back({std::move(lu), std::move(piv)});
  }
  n.out = std::move(out);
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  return Tensor(nodes_.back().out, this, id);
}

Tensor Tape::record_custom(std::unique_ptr<CustomOp> op, std::span<const Tensor> inputs,
                           std::shared_ptr<const Storage> out) {
  Node n;
  n.op = Op::Custom;
  n.custom = std::move(op);
  n.in.reserve(inputs.size());
  for (const auto& t : inputs) {
    const int id = intern(t);
    n.in.push_back(id);
    n.needs_grad = n.needs_grad || nodes_[id].needs_grad;
  }
  n.out = std::move(out);
  nodes_.push_back(std::move(n));
  const int id = static_cast<int>(nodes_.size()) - 1;
  return Tensor(nodes_.back().out, this, id);
}

double* Tape::grad_slot(int id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad.assign(n.out->shape.size(), 0.0);
  return n.grad.data();
}

void Tape::backward(const Tensor& objective) {
  if (objective.tape() != this || objective.node() < 0)
    throw Error("backward: objective is not recorded on this tape");
  if (!objective.shape().is_scalar())
    throw Error("backward: objective must be scalar, got " + objective.shape().str());
  if (!nodes_[objective.node()].needs_grad)
    throw Error("backward: objective does not depend on any gradient leaf");

  for (auto& n : nodes_) n.grad.clear();
  grad_slot(objective.node())[0] = 1.0;

  for (int id = objective.node(); id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.op == Op::Leaf || !n.needs_grad || n.grad.empty()) continue;
    backward_node(id);
  }
}

Tensor Tape::grad(const Tensor& t) const {
  if (t.tape() != this || t.node() < 0) throw Error("grad: tensor is not on this tape");
  const Node& n = nodes_[t.node()];
  auto s = std::make_shared<Storage>();
  s->shape = n.out->shape;
  if (n.grad.empty()) {
    s->v.assign(s->shape.size(), 0.0);
  } else {
    s->v = n.grad;
  }
  return Tensor(std::move(s), nullptr, -1);
}

void Tape::backward_node(int id) {
  Node& n = nodes_[id];
  const double* g = n.grad.data();
  const Shape out_shape = n.out->shape;
  const std::size_t out_n = out_shape.size();

  auto in_val = [&](int slot) -> const Storage& { return *nodes_[n.in[slot]].out; };
  auto in_needs = [&](int slot) { return nodes_[n.in[slot]].needs_grad; };
  auto in_grad = [&](int slot) { return grad_slot(n.in[slot]); };

  switch (n.op) {
    case Op::Add:
    case Op::Sub: {
      const double sgn_b = n.op == Op::Add ? 1.0 : -1.0;
      for (int slot = 0; slot < 2; ++slot) {
        if (!in_needs(slot)) continue;
        const double sgn = slot == 0 ? 1.0 : sgn_b;
        double* gi = in_grad(slot);
        if (in_val(slot).shape.is_scalar() && !out_shape.is_scalar()) {
          gi[0] += sgn * kernels::sum(g, out_n);
        } else {
          kernels::axpy(sgn, g, gi, out_n);
        }
      }
      break;
    }
    case Op::Mul: {
      for (int slot = 0; slot < 2; ++slot) {
        if (!in_needs(slot)) continue;
        const Storage& other = in_val(1 - slot);
        double* gi = in_grad(slot);
        const bool self_scalar = in_val(slot).shape.is_scalar() && !out_shape.is_scalar();
        if (self_scalar) {
          // d/da (a*B) = sum(g .* B)
          gi[0] += kernels::dot(g, other.v.data(), out_n);
        } else if (other.shape.is_scalar() && !out_shape.is_scalar()) {
          kernels::axpy(other.v[0], g, gi, out_n);
        } else {
          kernels::vfma(g, other.v.data(), gi, out_n);
        }
      }
      break;
    }
    case Op::Div: {
      const Storage& a = in_val(0);
      const Storage& b = in_val(1);
      const bool a_scalar = a.shape.is_scalar() && !out_shape.is_scalar();
      const bool b_scalar = b.shape.is_scalar() && !out_shape.is_scalar();
      if (in_needs(0)) {
        double* ga = in_grad(0);
        for (std::size_t i = 0; i < out_n; ++i) {
          const double bv = b_scalar ? b.v[0] : b.v[i];
          const double contrib = g[i] / bv;
          if (a_scalar)
            ga[0] += contrib;
          else
            ga[i] += contrib;
        }
      }
      if (in_needs(1)) {
        double* gb = in_grad(1);
        const double* z = n.out->v.data();
        for (std::size_t i = 0; i < out_n; ++i) {
          const double bv = b_scalar ? b.v[0] : b.v[i];
          const double contrib = -g[i] * z[i] / bv;
          if (b_scalar)
            gb[0] += contrib;
          else
            gb[i] += contrib;
        }
      }
      break;
    }
    case Op::Neg:
      if (in_needs(0)) kernels::axpy(-1.0, g, in_grad(0), out_n);
      break;
    case Op::Scale:
      if (in_needs(0)) kernels::axpy(n.c, g, in_grad(0), out_n);
      break;
    case Op::AddC:
      if (in_needs(0)) kernels::axpy(1.0, g, in_grad(0), out_n);
      break;
    case Op::MatMul: {
      const bool ta = n.aux[0] != 0, tb = n.aux[1] != 0;
      const Storage& a = in_val(0);
      const Storage& b = in_val(1);
      const int m = out_shape.rows, nn = out_shape.cols;
      const int kk = ta ? a.shape.rows : a.shape.cols;  // inner dimension
      if (in_needs(0)) {
        double* ga = in_grad(0);
        if (!ta) {
          // gA(m x kk) = G * op(B)^T
          linalg::gemm(false, !tb, m, kk, nn, 1.0, g, nn, b.v.data(), b.shape.cols, 1.0, ga,
                       a.shape.cols);
        } else {
          // gA(kk x m) = op(B) * G^T
          linalg::gemm(tb, true, kk, m, nn, 1.0, b.v.data(), b.shape.cols, g, nn, 1.0, ga,
                       a.shape.cols);
        }
      }
      if (in_needs(1)) {
        double* gb = in_grad(1);
        if (!tb) {
          // gB(kk x nn) = op(A)^T * G
          linalg::gemm(!ta, false, kk, nn, m, 1.0, a.v.data(), a.shape.cols, g, nn, 1.0, gb,
                       b.shape.cols);
        } else {
          // gB(nn x kk) = G^T * op(A)
          linalg::gemm(true, ta, nn, kk, m, 1.0, g, nn, a.v.data(), a.shape.cols, 1.0, gb,
                       b.shape.cols);
        }
      }
      break;
    }
    case Op::Solve: {
      // x = A^{-1} b: gb = A^{-T} gx, gA = -gb x^T.
      const auto& payload = lu_payloads_[static_cast<std::size_t>(n.aux[0])];
      const std::size_t dim = out_n;
      std::vector<double> gb(g, g + dim);
      linalg::lu_solve_transposed(payload.lu.data(), dim, payload.piv.data(), gb.data());
      if (in_needs(1)) kernels::axpy(1.0, gb.data(), in_grad(1), dim);
      if (in_needs(0)) {
        double* ga = in_grad(0);
        const double* x = n.out->v.data();
        for (std::size_t r = 0; r < dim; ++r) {
          kernels::axpy(-gb[r], x, ga + r * dim, dim);
        }
      }
      break;
    }
    case Op::Sum:
      if (in_needs(0)) {
        double* gi = in_grad(0);
        const std::size_t ni = in_val(0).shape.size();
        for (std::size_t i = 0; i < ni; ++i) gi[i] += g[0];
      }
      break;
    case Op::Norm:
      if (in_needs(0)) {
        const double nv = n.out->v[0];
        if (nv > 0.0) {
          kernels::axpy(g[0] / nv, in_val(0).v.data(), in_grad(0), in_val(0).shape.size());
        }
      }
      break;
    case Op::Log:
      if (in_needs(0)) {
        double* gi = in_grad(0);
        const Storage& a = in_val(0);
        for (std::size_t i = 0; i < out_n; ++i) gi[i] += g[i] / a.v[i];
      }
      break;
    case Op::Exp:
      if (in_needs(0)) kernels::vfma(g, n.out->v.data(), in_grad(0), out_n);
      break;
    case Op::Sigmoid:
      if (in_needs(0)) {
        double* gi = in_grad(0);
        const double* z = n.out->v.data();
        for (std::size_t i = 0; i < out_n; ++i) gi[i] += g[i] * z[i] * (1.0 - z[i]);
      }
      break;
    case Op::Sin:
      if (in_needs(0)) {
        double* gi = in_grad(0);
        const Storage& a = in_val(0);
        for (std::size_t i = 0; i < out_n; ++i) gi[i] += g[i] * std::cos(a.v[i]);
      }
      break;
    case Op::Cos:
      if (in_needs(0)) {
        double* gi = in_grad(0);
        const Storage& a = in_val(0);
        for (std::size_t i = 0; i < out_n; ++i) gi[i] -= g[i] * std::sin(a.v[i]);
      }
      break;
    case Op::Sqrt:
      if (in_needs(0)) {
        double* gi = in_grad(0);
        const double* z = n.out->v.data();
        for (std::size_t i = 0; i < out_n; ++i) {
          if (z[i] > 0.0) gi[i] += g[i] / (2.0 * z[i]);
        }
      }
      break;
    case Op::Relu:
      if (in_needs(0)) {
        double* gi = in_grad(0);
        const Storage& a = in_val(0);
        for (std::size_t i = 0; i < out_n; ++i) {
          if (a.v[i] > 0.0) gi[i] += g[i];
        }
      }
      break;
    case Op::BesselI0:
      if (in_needs(0)) {
        double* gi = in_grad(0);
        const Storage& a = in_val(0);
        for (std::size_t i = 0; i < out_n; ++i)
          gi[i] += g[i] * std::cyl_bessel_i(1.0, a.v[i]);
      }
      break;
    case Op::Concat: {
      std::size_t ofs = 0;
      for (std::size_t slot = 0; slot < n.in.size(); ++slot) {
        const std::size_t sz = in_val(static_cast<int>(slot)).shape.size();
        if (in_needs(static_cast<int>(slot))) {
          kernels::axpy(1.0, g + ofs, in_grad(static_cast<int>(slot)), sz);
        }
        ofs += sz;
      }
      break;
    }
    case Op::Block: {
      if (in_needs(0)) {
        const Storage& a = in_val(0);
        double* gi = in_grad(0);
        const int r0 = n.aux[0], c0 = n.aux[1], rows = n.aux[2], cols = n.aux[3];
        for (int r = 0; r < rows; ++r) {
          kernels::axpy(1.0, g + static_cast<std::size_t>(r) * cols,
                        gi + static_cast<std::size_t>(r0 + r) * a.shape.cols + c0, cols);
        }
      }
      break;
    }
    case Op::Cross: {
      const Storage& a = in_val(0);
      const Storage& b = in_val(1);
      if (in_needs(0)) {
        double* ga = in_grad(0);
        // ga += b x g
        ga[0] += b.v[1] * g[2] - b.v[2] * g[1];
        ga[1] += b.v[2] * g[0] - b.v[0] * g[2];
        ga[2] += b.v[0] * g[1] - b.v[1] * g[0];
      }
      if (in_needs(1)) {
        double* gb = in_grad(1);
        // gb += g x a
        gb[0] += g[1] * a.v[2] - g[2] * a.v[1];
        gb[1] += g[2] * a.v[0] - g[0] * a.v[2];
        gb[2] += g[0] * a.v[1] - g[1] * a.v[0];
      }
      break;
    }
    case Op::RotVec: {
      if (!in_needs(0)) break;
      const Storage& r = in_val(0);
      double* gr = in_grad(0);
      const double tr = r.v[0] + r.v[4] + r.v[8];
      const double u = std::clamp((tr - 1.0) / 2.0, -1.0, 1.0);
      const double theta = std::acos(u);
      const double w[3] = {r.v[7] - r.v[5], r.v[2] - r.v[6], r.v[3] - r.v[1]};
      const double f = half_angle_over_sin(theta);
      const double fp = half_angle_over_sin_deriv(theta);
      // gw = f * g; gtheta = f'(theta) * (g . w)
      const double gw[3] = {f * g[0], f * g[1], f * g[2]};
      const double gdotw = g[0] * w[0] + g[1] * w[1] + g[2] * w[2];
      const double sin_theta = std::max(std::sin(theta), 1e-3);
      const double gtheta = fp * gdotw;
      const double diag = -gtheta / (2.0 * sin_theta);
      gr[0] += diag;
      gr[4] += diag;
      gr[8] += diag;
      gr[7] += gw[0];
      gr[5] -= gw[0];
      gr[2] += gw[1];
      gr[6] -= gw[1];
      gr[3] += gw[2];
      gr[1] -= gw[2];
      break;
    }
    case Op::Custom: {
      std::vector<const Storage*> vals(n.in.size());
      std::vector<double*> grads(n.in.size());
      for (std::size_t i = 0; i < n.in.size(); ++i) {
        vals[i] = nodes_[n.in[i]].out.get();
        grads[i] = nodes_[n.in[i]].needs_grad ? grad_slot(n.in[i]) : nullptr;
      }
      BackwardCtx ctx{n.out->v.data(), g, out_shape, vals, grads};
      n.custom->backward(ctx);
      break;
    }
    case Op::Leaf:
      break;
  }
}

// ---------------------------------------------------------------------------
// Op layer

namespace {
Tensor rec2(Op op, const Tensor& a, const Tensor& b) {
  const Tensor in[2] = {a, b};
  return record(op, in);
}
Tensor rec1(Op op, const Tensor& a) {
  const Tensor in[1] = {a};
  return record(op, in);
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return rec2(Op::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return rec2(Op::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return rec2(Op::Mul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return rec2(Op::Div, a, b); }
Tensor neg(const Tensor& a) { return rec1(Op::Neg, a); }
Tensor scale(const Tensor& a, double c) {
  const Tensor in[1] = {a};
  return record(Op::Scale, in, c);
}
Tensor add_const(const Tensor& a, double c) {
  const Tensor in[1] = {a};
  return record(Op::AddC, in, c);
}
Tensor matmul(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  const Tensor in[2] = {a, b};
  return record(Op::MatMul, in, 0.0, trans_a ? 1 : 0, trans_b ? 1 : 0);
}
Tensor solve(const Tensor& a, const Tensor& b) { return rec2(Op::Solve, a, b); }
Tensor sum(const Tensor& a) { return rec1(Op::Sum, a); }
Tensor norm(const Tensor& a) { return rec1(Op::Norm, a); }
Tensor log(const Tensor& a) { return rec1(Op::Log, a); }
Tensor exp(const Tensor& a) { return rec1(Op::Exp, a); }
Tensor sigmoid(const Tensor& a) { return rec1(Op::Sigmoid, a); }
Tensor sin(const Tensor& a) { return rec1(Op::Sin, a); }
Tensor cos(const Tensor& a) { return rec1(Op::Cos, a); }
Tensor sqrt(const Tensor& a) { return rec1(Op::Sqrt, a); }
Tensor relu(const Tensor& a) { return rec1(Op::Relu, a); }
Tensor bessel_i0(const Tensor& a) { return rec1(Op::BesselI0, a); }
Tensor concat(std::span<const Tensor> parts) { return record(Op::Concat, parts); }
Tensor concat(std::initializer_list<Tensor> parts) {
  return record(Op::Concat, std::span<const Tensor>(parts.begin(), parts.size()));
}
Tensor block(const Tensor& a, int r0, int c0, int rows, int cols) {
  const Tensor in[1] = {a};
  return record(Op::Block, in, 0.0, r0, c0, rows, cols);
}
Tensor cross(const Tensor& a, const Tensor& b) { return rec2(Op::Cross, a, b); }
Tensor rotation_vector(const Tensor& r) { return rec1(Op::RotVec, r); }

}  // namespace fgp::ad
