#pragma once

#include <cstddef>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fgp/error.hpp"

namespace fgp::ad {

class Tape;

// Dense row-major float64 tensor of rank <= 2. Scalars are (1,1), vectors
// are (n,1).
struct Shape {
  int rows = 1;
  int cols = 1;

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
  bool operator==(const Shape&) const = default;
  bool is_scalar() const { return rows == 1 && cols == 1; }
  bool is_vector() const { return cols == 1; }
  std::string str() const { return std::to_string(rows) + "x" + std::to_string(cols); }
};

struct Storage {
  Shape shape;
  std::vector<double> v;
};

// Immutable value handle, optionally attached to a tape node. Copying a
// Tensor copies the handle, never the data.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::shared_ptr<const Storage> data, Tape* tape, int node)
      : data_(std::move(data)), tape_(tape), node_(node) {}

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(int rows, int cols, std::vector<double> v);
  static Tensor zeros(int rows, int cols = 1);
  static Tensor full(int rows, int cols, double v);

  bool defined() const { return data_ != nullptr; }
  const Shape& shape() const { return data_->shape; }
  int rows() const { return data_->shape.rows; }
  int cols() const { return data_->shape.cols; }
  std::size_t size() const { return data_->shape.size(); }

  std::span<const double> values() const { return data_->v; }
  const double* data() const { return data_->v.data(); }
  double operator[](std::size_t i) const { return data_->v[i]; }
  double at(int r, int c) const { return data_->v[static_cast<std::size_t>(r) * cols() + c]; }
  // Value of a scalar tensor.
  double item() const {
    if (!shape().is_scalar()) throw Error("item(): tensor is " + shape().str() + ", not scalar");
    return data_->v[0];
  }

  // Value handle without tape attachment; gradients do not flow past it.
  Tensor detached() const { return Tensor(data_, nullptr, -1); }

  Tape* tape() const { return tape_; }
  int node() const { return node_; }
  std::shared_ptr<const Storage> storage() const { return data_; }

 private:
  std::shared_ptr<const Storage> data_;
  Tape* tape_ = nullptr;
  int node_ = -1;
};

inline Tensor make_tensor(Shape shape, std::vector<double> v) {
  if (v.size() != shape.size()) throw Error("tensor data length does not match shape " + shape.str());
  auto s = std::make_shared<Storage>();
  s->shape = shape;
  s->v = std::move(v);
  return Tensor(std::move(s), nullptr, -1);
}

inline Tensor Tensor::scalar(double v) { return make_tensor({1, 1}, {v}); }
inline Tensor Tensor::vector(std::vector<double> v) {
  const int n = static_cast<int>(v.size());
  return make_tensor({n, 1}, std::move(v));
}
inline Tensor Tensor::matrix(int rows, int cols, std::vector<double> v) {
  return make_tensor({rows, cols}, std::move(v));
}
inline Tensor Tensor::zeros(int rows, int cols) {
  return make_tensor({rows, cols}, std::vector<double>(static_cast<std::size_t>(rows) * cols, 0.0));
}
inline Tensor Tensor::full(int rows, int cols, double v) {
  return make_tensor({rows, cols}, std::vector<double>(static_cast<std::size_t>(rows) * cols, v));
}

}  // namespace fgp::ad
