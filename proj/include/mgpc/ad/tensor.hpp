// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace mgpc::ad {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tape;
class ParamStore;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Tensor {
 public:
  Tensor() = default;
  Tensor(Tape* tape, std::uint32_t id) : tape_(tape), id_(id) {}

  bool valid() const noexcept { return tape_ != nullptr; }
  Tape& tape() const { return *tape_; }
  std::uint32_t id() const noexcept { return id_; }

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t i) const { return shape().at(i); }
  /// Leading dimension of a rank-2 tensor.
  std::size_t rows() const;
  /// Trailing dimension.
  std::size_t cols() const;
  std::size_t numel() const;
  bool requires_grad() const;

  std::span<const double> value() const;
  /// Accumulated gradient; empty until backward() reaches this node.
  std::span<const double> grad() const;
  double item() const;
  double at(std::size_t r, std::size_t c) const;

  /// Reverse pass seeded with d(self)/d(self) = 1; self must hold one element.
  void backward() const;

 private:
  Tape* tape_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Dynamic reverse-mode tape. Nodes are appended in evaluation order and the
/// reverse pass visits them in the opposite order, so a tape is rebuilt for
/// every forward pass. Not thread-safe; use one tape per thread.
class Tape {
 public:
  using Backward = std::function<void(Tape&, std::uint32_t self)>;

  struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    const char* op = "";
    Backward backward;
  };

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Tensor constant(Shape shape, std::vector<double> value);
  /// Differentiable leaf not backed by a ParamStore (gradient stays on the node).
  Tensor leaf(Shape shape, std::vector<double> value);
  /// Leaf bound to a stored parameter; the reverse pass adds its gradient
  /// into the store. Repeated calls with one name return the same node.
  Tensor parameter(ParamStore& store, const std::string& name);

  /// Appends an op result. `backward` is kept only when an input requires grad.
  Tensor make(const char* op, Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
              Backward backward);
  Tensor make(const char* op, Shape shape, std::vector<double> value, std::span<const Tensor> inputs,
              Backward backward);

  Node& node(std::uint32_t id) { return nodes_.at(id); }
  const Node& node(std::uint32_t id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  /// Gradient buffer of an input, allocated on first use; nullptr when the
  /// node does not require grad.
  double* grad_buffer(std::uint32_t id);

  void backward(const Tensor& root);

  /// Negative controls for gradient checking: scale the incoming gradient of
  /// every node produced by `op`, or flip the sign of one parameter's gradient.
  void corrupt_op(std::string op, double factor = 0.5);
  void corrupt_param(std::string name);

 private:
  std::vector<Node> nodes_;
  std::map<std::string, std::uint32_t, std::less<>> param_nodes_;
  std::optional<std::pair<std::string, double>> corrupt_op_;
  std::optional<std::string> corrupt_param_;
};

// Core ops. Matrix ops take rank-2 tensors; shape mismatches throw
// InvalidArgument naming the op and both shapes.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// Swaps the last two dimensions of a rank-2 or rank-3 tensor.
Tensor transpose(const Tensor& a);
Tensor reshape(const Tensor& a, Shape shape);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count);
/// Mean / max over one axis; the axis is removed from the shape.
Tensor reduce_mean(const Tensor& a, std::size_t axis);
Tensor reduce_max(const Tensor& a, std::size_t axis);
Tensor mean_all(const Tensor& a);
Tensor sum_all(const Tensor& a);
Tensor softmax_rows(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor square(const Tensor& a);
/// Normalizes each row over the last dimension, then applies gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-8);
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices);
/// Each row repeated `times` times consecutively.
Tensor repeat_rows(const Tensor& a, std::size_t times);
/// a [m, n] + b broadcast over rows; b holds n elements.
Tensor broadcast_add(const Tensor& a, const Tensor& b);

inline Tensor concat_cols(std::initializer_list<Tensor> parts) {
  return concat_cols(std::span<const Tensor>(parts.begin(), parts.size()));
}
inline Tensor concat_rows(std::initializer_list<Tensor> parts) {
  return concat_rows(std::span<const Tensor>(parts.begin(), parts.size()));
}

}  // namespace mgpc::ad
