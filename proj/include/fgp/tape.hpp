#pragma once

#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include "fgp/tensor.hpp"

namespace fgp::ad {

enum class Op : unsigned char {
  Leaf,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Scale,   // c * x
  AddC,    // x + c
  MatMul,  // transpose flags in payload
  Solve,   // x = A^{-1} b, adjoint recorded directly
  Sum,
  Norm,
  Log,
  Exp,
  Sigmoid,
  Sin,
  Cos,
  Sqrt,
  Relu,
  Concat,     // along rows
  Block,      // submatrix copy
  Transpose,
  Cross,      // 3-vectors
  RotVec,     // rotation matrix -> rotation vector
  OrientCoeff,  // c(theta) of the inverse right Jacobian of SO(3)
  BesselI0,
  Custom,
};

const char* op_name(Op op);

// Context handed to a custom operation's backward pass. in_grads entries are
// null for inputs that do not require gradients.
struct BackwardCtx {
  const double* out_val;
  const double* out_grad;
  Shape out_shape;
  std::span<const Storage* const> in_vals;
  std::span<double* const> in_grads;
};

struct CustomOp {
  virtual ~CustomOp() = default;
  virtual const char* name() const = 0;
  virtual void backward(const BackwardCtx& ctx) = 0;
};

// Reverse-mode tape. Confined to one logical thread for its lifetime;
// distinct tapes are independent. Nodes are recorded in topological order by
// construction and visited exactly once on the backward sweep.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a gradient leaf. The returned tensor participates in this
  // tape's graph; its gradient is available after backward().
  Tensor leaf(const Tensor& value, bool requires_grad = true);

  // Records a primitive over already-evaluated output values. Used by the op
  // layer; not meant for direct call sites.
  Tensor emplace(Op op, std::span<const Tensor> inputs, std::shared_ptr<const Storage> out,
                 double c = 0.0, int aux0 = 0, int aux1 = 0, int aux2 = 0, int aux3 = 0,
                 std::vector<double> lu = {}, std::vector<int> piv = {});

  // Records a custom operation whose forward result was computed by the
  // caller.
  Tensor record_custom(std::unique_ptr<CustomOp> op, std::span<const Tensor> inputs,
                       std::shared_ptr<const Storage> out);

  // Reverse sweep from a scalar objective. Gradients of all leaves reachable
  // from it become available via grad(); unreachable leaves read as zero.
  void backward(const Tensor& objective);

  // Gradient of a leaf (or any recorded tensor) after backward(); zeros when
  // the node was not reached.
  Tensor grad(const Tensor& t) const;

  std::size_t num_nodes() const { return nodes_.size(); }

  // Internal: ensures a detached tensor is materialized as a constant node
  // of this tape.
  int intern(const Tensor& t);

 private:
  struct Node {
    Op op = Op::Leaf;
    bool needs_grad = false;
    double c = 0.0;                  // Scale/AddC payload
    int aux[4] = {0, 0, 0, 0};       // Block offsets, MatMul flags, Solve payload index
    std::vector<int> in;
    std::shared_ptr<const Storage> out;
    std::vector<double> grad;        // allocated on first touch in backward
    std::unique_ptr<CustomOp> custom;
  };

  double* grad_slot(int id);
  void backward_node(int id);

  std::vector<Node> nodes_;
  std::unordered_map<const Storage*, int> interned_;
  // LU factors kept by Solve nodes for the adjoint solve.
  struct LuPayload {
    std::vector<double> lu;
    std::vector<int> piv;
  };
  std::vector<LuPayload> lu_payloads_;

  friend class OpAccess;
};

// Primitive dispatch: forward evaluation shared by the eager and recorded
// paths, plus shape validation. `record` evaluates the primitive over the
// inputs and attaches the result to a tape when any input is attached.
Tensor record(Op op, std::span<const Tensor> inputs, double c = 0.0, int aux0 = 0, int aux1 = 0,
              int aux2 = 0, int aux3 = 0);

}  // namespace fgp::ad
