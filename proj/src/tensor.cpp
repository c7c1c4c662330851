// SPDX-License-Identifier: Apache-2.0
#include "mgpc/ad/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "mgpc/ad/param_store.hpp"
#include "mgpc/error.hpp"

namespace mgpc::ad {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const Matrix>;
using Map = Eigen::Map<Matrix>;

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ", ";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

// ---------------------------------------------------------------------------
// Tensor handle

const Shape& Tensor::shape() const { return tape_->node(id_).shape; }
std::size_t Tensor::numel() const { return tape_->node(id_).value.size(); }
bool Tensor::requires_grad() const { return tape_->node(id_).requires_grad; }

std::size_t Tensor::rows() const {
  const Shape& s = shape();
  return s.size() >= 2 ? s[s.size() - 2] : 1;
}

std::size_t Tensor::cols() const {
  const Shape& s = shape();
  return s.empty() ? 1 : s.back();
}

std::span<const double> Tensor::value() const { return tape_->node(id_).value; }
std::span<const double> Tensor::grad() const { return tape_->node(id_).grad; }

double Tensor::item() const {
  const auto& v = tape_->node(id_).value;
  if (v.size() != 1) throw InvalidArgument("item: tensor of shape " + shape_string(shape()) + " is not a scalar");
  return v[0];
}

double Tensor::at(std::size_t r, std::size_t c) const { return value()[r * cols() + c]; }

void Tensor::backward() const { tape_->backward(*this); }

// ---------------------------------------------------------------------------
// Tape

Tensor Tape::constant(Shape shape, std::vector<double> value) {
  if (numel(shape) != value.size()) {
    throw InvalidArgument("constant: " + std::to_string(value.size()) + " values for shape " + shape_string(shape));
  }
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

Tensor Tape::leaf(Shape shape, std::vector<double> value) {
  Tensor t = constant(std::move(shape), std::move(value));
  nodes_.back().requires_grad = true;
  nodes_.back().op = "leaf";
  return t;
}

Tensor Tape::parameter(ParamStore& store, const std::string& name) {
  if (auto it = param_nodes_.find(name); it != param_nodes_.end()) return Tensor(this, it->second);
  Parameter& p = store.at(name);
  Node n;
  n.shape = p.shape;
  n.value = p.value;
  n.requires_grad = !p.frozen;
  n.op = "parameter";
  if (n.requires_grad) {
    const double sign = (corrupt_param_ && *corrupt_param_ == name) ? -1.0 : 1.0;
    Parameter* target = &p;
    n.backward = [target, sign](Tape& tape, std::uint32_t self) {
      const auto& g = tape.node(self).grad;
      for (std::size_t i = 0; i < g.size(); ++i) target->grad[i] += sign * g[i];
    };
  }
  nodes_.push_back(std::move(n));
  const auto id = static_cast<std::uint32_t>(nodes_.size() - 1);
  param_nodes_.emplace(name, id);
  return Tensor(this, id);
}

Tensor Tape::make(const char* op, Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
                  Backward backward) {
  return make(op, std::move(shape), std::move(value), std::span<const Tensor>(inputs.begin(), inputs.size()),
              std::move(backward));
}

Tensor Tape::make(const char* op, Shape shape, std::vector<double> value, std::span<const Tensor> inputs,
                  Backward backward) {
  Node n;
  n.shape = std::move(shape);
  n.value = std::move(value);
  n.op = op;
  for (const Tensor& t : inputs) {
    if (&t.tape() != this) throw InvalidArgument(std::string(op) + ": inputs live on different tapes");
    n.requires_grad = n.requires_grad || node(t.id()).requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<std::uint32_t>(nodes_.size() - 1));
}

double* Tape::grad_buffer(std::uint32_t id) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad.data();
}

void Tape::backward(const Tensor& root) {
  if (&root.tape() != this) throw InvalidArgument("backward: tensor belongs to another tape");
  Node& r = nodes_[root.id()];
  if (r.value.size() != 1) throw InvalidArgument("backward: root must be a scalar, got " + shape_string(r.shape));
  if (!r.requires_grad) return;
  r.grad.assign(1, 1.0);
  for (std::size_t i = root.id() + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty() || !n.backward) continue;
    if (corrupt_op_ && corrupt_op_->first == n.op) {
      for (double& g : n.grad) g *= corrupt_op_->second;
    }
    n.backward(*this, static_cast<std::uint32_t>(i));
  }
}

void Tape::corrupt_op(std::string op, double factor) { corrupt_op_ = std::make_pair(std::move(op), factor); }
void Tape::corrupt_param(std::string name) { corrupt_param_ = std::move(name); }

// ---------------------------------------------------------------------------
// Ops

namespace {

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw InvalidArgument(std::string(op) + ": incompatible shapes " + shape_string(a.shape()) + " and " +
                        shape_string(b.shape()));
}

void require_rank2(const char* op, const Tensor& a) {
  if (a.rank() != 2) throw InvalidArgument(std::string(op) + ": expected rank-2 tensor, got " + shape_string(a.shape()));
}

const std::vector<double>& val(Tape& t, std::uint32_t id) { return t.node(id).value; }
const std::vector<double>& grd(Tape& t, std::uint32_t id) { return t.node(id).grad; }

template <typename Fn, typename Dfn>
Tensor unary(const char* op, const Tensor& a, Fn&& fn, Dfn&& dfn) {
  Tape& tape = a.tape();
  std::vector<double> out(a.numel());
  const auto in = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(in[i]);
  const std::uint32_t ai = a.id();
  return tape.make(op, a.shape(), std::move(out), {a}, [ai, dfn](Tape& t, std::uint32_t self) {
    double* ga = t.grad_buffer(ai);
    if (!ga) return;
    const auto& g = grd(t, self);
    const auto& x = val(t, ai);
    const auto& y = val(t, self);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfn(x[i], y[i]);
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2("matmul", a);
  require_rank2("matmul", b);
  if (a.cols() != b.rows()) shape_error("matmul", a, b);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  Map(out.data(), m, n).noalias() = MapC(a.value().data(), m, k) * MapC(b.value().data(), k, n);
  const std::uint32_t ai = a.id(), bi = b.id();
  return a.tape().make("matmul", {m, n}, std::move(out), {a, b}, [ai, bi, m, k, n](Tape& t, std::uint32_t self) {
    MapC g(grd(t, self).data(), m, n);
    if (double* ga = t.grad_buffer(ai)) Map(ga, m, k).noalias() += g * MapC(val(t, bi).data(), k, n).transpose();
    if (double* gb = t.grad_buffer(bi)) Map(gb, k, n).noalias() += MapC(val(t, ai).data(), m, k).transpose() * g;
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("add", a, b);
  std::vector<double> out(a.value().begin(), a.value().end());
  const auto bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  const std::uint32_t ai = a.id(), bi = b.id();
  return a.tape().make("add", a.shape(), std::move(out), {a, b}, [ai, bi](Tape& t, std::uint32_t self) {
    const auto& g = grd(t, self);
    if (double* ga = t.grad_buffer(ai)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double* gb = t.grad_buffer(bi)) for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("sub", a, b);
  std::vector<double> out(a.value().begin(), a.value().end());
  const auto bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  const std::uint32_t ai = a.id(), bi = b.id();
  return a.tape().make("sub", a.shape(), std::move(out), {a, b}, [ai, bi](Tape& t, std::uint32_t self) {
    const auto& g = grd(t, self);
    if (double* ga = t.grad_buffer(ai)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double* gb = t.grad_buffer(bi)) for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) shape_error("mul", a, b);
  std::vector<double> out(a.value().begin(), a.value().end());
  const auto bv = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  const std::uint32_t ai = a.id(), bi = b.id();
  return a.tape().make("mul", a.shape(), std::move(out), {a, b}, [ai, bi](Tape& t, std::uint32_t self) {
    const auto& g = grd(t, self);
    if (double* ga = t.grad_buffer(ai)) {
      const auto& y = val(t, bi);
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
    }
    if (double* gb = t.grad_buffer(bi)) {
      const auto& x = val(t, ai);
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
    }
  });
}

Tensor scale(const Tensor& a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Tensor relu(const Tensor& a) {
  return unary("relu", a, [](double x) { return x > 0.0 ? x : 0.0; },
               [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor gelu(const Tensor& a) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  return unary(
      "gelu", a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
      [inv_sqrt_2pi](double x, double) {
        return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * inv_sqrt_2pi * std::exp(-0.5 * x * x);
      });
}

Tensor square(const Tensor& a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2 && a.rank() != 3) {
    throw InvalidArgument("transpose: expected rank 2 or 3, got " + shape_string(a.shape()));
  }
  const std::size_t batch = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(a.numel());
  const auto in = a.value();
  for (std::size_t b = 0; b < batch; ++b) {
    Map(out.data() + b * m * n, n, m) = MapC(in.data() + b * m * n, m, n).transpose();
  }
  Shape shape = a.shape();
  std::swap(shape[shape.size() - 1], shape[shape.size() - 2]);
  const std::uint32_t ai = a.id();
  return a.tape().make("transpose", std::move(shape), std::move(out), {a},
                       [ai, batch, m, n](Tape& t, std::uint32_t self) {
                         double* ga = t.grad_buffer(ai);
                         if (!ga) return;
                         const auto& g = grd(t, self);
                         for (std::size_t b = 0; b < batch; ++b) {
                           Map(ga + b * m * n, m, n) += MapC(g.data() + b * m * n, n, m).transpose();
                         }
                       });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel(shape) != a.numel()) {
    throw InvalidArgument("reshape: cannot view " + shape_string(a.shape()) + " as " + shape_string(shape));
  }
  std::vector<double> out(a.value().begin(), a.value().end());
  const std::uint32_t ai = a.id();
  return a.tape().make("reshape", std::move(shape), std::move(out), {a}, [ai](Tape& t, std::uint32_t self) {
    double* ga = t.grad_buffer(ai);
    if (!ga) return;
    const auto& g = grd(t, self);
    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw InvalidArgument("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::size_t total = 0;
  std::vector<std::size_t> widths;
  for (const Tensor& p : parts) {
    require_rank2("concat_cols", p);
    if (p.rows() != m) shape_error("concat_cols", parts[0], p);
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<double> out(m * total);
  std::size_t off = 0;
  for (const Tensor& p : parts) {
    const auto v = p.value();
    const std::size_t w = p.cols();
    for (std::size_t r = 0; r < m; ++r) std::copy_n(v.data() + r * w, w, out.data() + r * total + off);
    off += w;
  }
  std::vector<std::uint32_t> ids;
  for (const Tensor& p : parts) ids.push_back(p.id());
  return parts[0].tape().make("concat_cols", {m, total}, std::move(out), parts,
                              [ids, widths, m, total](Tape& t, std::uint32_t self) {
                                const auto& g = grd(t, self);
                                std::size_t off = 0;
                                for (std::size_t k = 0; k < ids.size(); ++k) {
                                  const std::size_t w = widths[k];
                                  if (double* gp = t.grad_buffer(ids[k])) {
                                    for (std::size_t r = 0; r < m; ++r) {
                                      for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * total + off + c];
                                    }
                                  }
                                  off += w;
                                }
                              });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw InvalidArgument("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t rows = 0;
  for (const Tensor& p : parts) {
    require_rank2("concat_rows", p);
    if (p.cols() != n) shape_error("concat_rows", parts[0], p);
    rows += p.rows();
  }
  std::vector<double> out;
  out.reserve(rows * n);
  std::vector<std::uint32_t> ids;
  std::vector<std::size_t> sizes;
  for (const Tensor& p : parts) {
    out.insert(out.end(), p.value().begin(), p.value().end());
    ids.push_back(p.id());
    sizes.push_back(p.numel());
  }
  return parts[0].tape().make("concat_rows", {rows, n}, std::move(out), parts,
                              [ids, sizes](Tape& t, std::uint32_t self) {
                                const auto& g = grd(t, self);
                                std::size_t off = 0;
                                for (std::size_t k = 0; k < ids.size(); ++k) {
                                  if (double* gp = t.grad_buffer(ids[k])) {
                                    for (std::size_t i = 0; i < sizes[k]; ++i) gp[i] += g[off + i];
                                  }
                                  off += sizes[k];
                                }
                              });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank2("slice_rows", a);
  if (begin + count > a.rows() || count == 0) {
    throw InvalidArgument("slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                          ") out of range for " + shape_string(a.shape()));
  }
  const std::size_t n = a.cols();
  std::vector<double> out(a.value().begin() + static_cast<std::ptrdiff_t>(begin * n),
                          a.value().begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  const std::uint32_t ai = a.id();
  return a.tape().make("slice_rows", {count, n}, std::move(out), {a}, [ai, begin, n](Tape& t, std::uint32_t self) {
    double* ga = t.grad_buffer(ai);
    if (!ga) return;
    const auto& g = grd(t, self);
    for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
  });
}

Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t count) {
  require_rank2("slice_cols", a);
  if (begin + count > a.cols() || count == 0) {
    throw InvalidArgument("slice_cols: columns [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
                          ") out of range for " + shape_string(a.shape()));
  }
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * count);
  const auto v = a.value();
  for (std::size_t r = 0; r < m; ++r) std::copy_n(v.data() + r * n + begin, count, out.data() + r * count);
  const std::uint32_t ai = a.id();
  return a.tape().make("slice_cols", {m, count}, std::move(out), {a},
                       [ai, begin, count, m, n](Tape& t, std::uint32_t self) {
                         double* ga = t.grad_buffer(ai);
                         if (!ga) return;
                         const auto& g = grd(t, self);
                         for (std::size_t r = 0; r < m; ++r) {
                           for (std::size_t c = 0; c < count; ++c) ga[r * n + begin + c] += g[r * count + c];
                         }
                       });
}

namespace {

struct AxisSplit {
  std::size_t outer, axis, inner;
  Shape reduced;
};

AxisSplit split_axis(const char* op, const Tensor& a, std::size_t axis) {
  if (axis >= a.rank()) {
    throw InvalidArgument(std::string(op) + ": axis " + std::to_string(axis) + " out of range for " +
                          shape_string(a.shape()));
  }
  AxisSplit s{1, a.dim(axis), 1, {}};
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i < axis) s.outer *= a.dim(i);
    if (i > axis) s.inner *= a.dim(i);
    if (i != axis) s.reduced.push_back(a.dim(i));
  }
  return s;
}

}  // namespace

Tensor reduce_mean(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis("reduce_mean", a, axis);
  std::vector<double> out(s.outer * s.inner, 0.0);
  const auto v = a.value();
  const double inv = 1.0 / static_cast<double>(s.axis);
  for (std::size_t o = 0; o < s.outer; ++o)
    for (std::size_t k = 0; k < s.axis; ++k)
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += v[(o * s.axis + k) * s.inner + i] * inv;
  const std::uint32_t ai = a.id();
  return a.tape().make("reduce_mean", s.reduced, std::move(out), {a}, [ai, s, inv](Tape& t, std::uint32_t self) {
    double* ga = t.grad_buffer(ai);
    if (!ga) return;
    const auto& g = grd(t, self);
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t k = 0; k < s.axis; ++k)
        for (std::size_t i = 0; i < s.inner; ++i) ga[(o * s.axis + k) * s.inner + i] += g[o * s.inner + i] * inv;
  });
}

Tensor reduce_max(const Tensor& a, std::size_t axis) {
  const AxisSplit s = split_axis("reduce_max", a, axis);
  std::vector<double> out(s.outer * s.inner);
  std::vector<std::size_t> arg(s.outer * s.inner);
  const auto v = a.value();
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      std::size_t best = (o * s.axis) * s.inner + i;
      for (std::size_t k = 1; k < s.axis; ++k) {
        const std::size_t idx = (o * s.axis + k) * s.inner + i;
        if (v[idx] > v[best]) best = idx;
      }
      out[o * s.inner + i] = v[best];
      arg[o * s.inner + i] = best;
    }
  }
  const std::uint32_t ai = a.id();
  return a.tape().make("reduce_max", s.reduced, std::move(out), {a},
                       [ai, arg = std::move(arg)](Tape& t, std::uint32_t self) {
                         double* ga = t.grad_buffer(ai);
                         if (!ga) return;
                         const auto& g = grd(t, self);
                         for (std::size_t j = 0; j < g.size(); ++j) ga[arg[j]] += g[j];
                       });
}

Tensor sum_all(const Tensor& a) {
  double s = 0.0;
  for (double x : a.value()) s += x;
  const std::uint32_t ai = a.id();
  return a.tape().make("sum_all", {1}, {s}, {a}, [ai](Tape& t, std::uint32_t self) {
    double* ga = t.grad_buffer(ai);
    if (!ga) return;
    const double g = grd(t, self)[0];
    const std::size_t n = val(t, ai).size();
    for (std::size_t i = 0; i < n; ++i) ga[i] += g;
  });
}

Tensor mean_all(const Tensor& a) { return scale(sum_all(a), 1.0 / static_cast<double>(a.numel())); }

Tensor softmax_rows(const Tensor& a) {
  const std::size_t n = a.cols();
  const std::size_t m = a.numel() / n;
  std::vector<double> out(a.numel());
  const auto v = a.value();
  for (std::size_t r = 0; r < m; ++r) {
    const double* x = v.data() + r * n;
    double* y = out.data() + r * n;
    const double mx = *std::max_element(x, x + n);
    double sum = 0.0;
    for (std::size_t c = 0; c < n; ++c) sum += (y[c] = std::exp(x[c] - mx));
    for (std::size_t c = 0; c < n; ++c) y[c] /= sum;
  }
  const std::uint32_t ai = a.id();
  return a.tape().make("softmax_rows", a.shape(), std::move(out), {a}, [ai, m, n](Tape& t, std::uint32_t self) {
    double* ga = t.grad_buffer(ai);
    if (!ga) return;
    const auto& g = grd(t, self);
    const auto& y = val(t, self);
    for (std::size_t r = 0; r < m; ++r) {
      double dot = 0.0;
      for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
      for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += y[r * n + c] * (g[r * n + c] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  const std::size_t n = x.cols();
  if (gain.numel() != n || bias.numel() != n) {
    throw InvalidArgument("layer_norm: gain/bias of shape " + shape_string(gain.shape()) + "/" +
                          shape_string(bias.shape()) + " do not match feature dim of " + shape_string(x.shape()));
  }
  const std::size_t m = x.numel() / n;
  std::vector<double> out(x.numel());
  std::vector<double> xhat(x.numel());
  std::vector<double> inv_std(m);
  const auto xv = x.value();
  const auto gv = gain.value();
  const auto bv = bias.value();
  for (std::size_t r = 0; r < m; ++r) {
    const double* row = xv.data() + r * n;
    double mean = 0.0;
    for (std::size_t c = 0; c < n; ++c) mean += row[c];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t c = 0; c < n; ++c) var += (row[c] - mean) * (row[c] - mean);
    var /= static_cast<double>(n);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (row[c] - mean) * inv_std[r];
      xhat[r * n + c] = h;
      out[r * n + c] = h * gv[c] + bv[c];
    }
  }
  const std::uint32_t xi = x.id(), gi = gain.id(), bi = bias.id();
  return x.tape().make(
      "layer_norm", x.shape(), std::move(out), {x, gain, bias},
      [xi, gi, bi, m, n, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& t, std::uint32_t self) {
        const auto& g = grd(t, self);
        if (double* gg = t.grad_buffer(gi)) {
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) gg[c] += g[r * n + c] * xhat[r * n + c];
        }
        if (double* gb = t.grad_buffer(bi)) {
          for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
        }
        if (double* gx = t.grad_buffer(xi)) {
          const auto& gain_v = val(t, gi);
          const double inv_n = 1.0 / static_cast<double>(n);
          for (std::size_t r = 0; r < m; ++r) {
            double sum_d = 0.0, sum_dx = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
              const double d = g[r * n + c] * gain_v[c];
              sum_d += d;
              sum_dx += d * xhat[r * n + c];
            }
            for (std::size_t c = 0; c < n; ++c) {
              const double d = g[r * n + c] * gain_v[c];
              gx[r * n + c] += inv_std[r] * (d - inv_n * sum_d - xhat[r * n + c] * inv_n * sum_dx);
            }
          }
        }
      });
}

Tensor gather_rows(const Tensor& a, std::span<const std::size_t> indices) {
  require_rank2("gather_rows", a);
  const std::size_t rows = a.rows(), n = a.cols();
  std::vector<double> out(indices.size() * n);
  const auto v = a.value();
  for (std::size_t i = 0; i < indices.size(); ++i) {
    if (indices[i] >= rows) {
      throw InvalidArgument("gather_rows: index " + std::to_string(indices[i]) + " out of range for " +
                            shape_string(a.shape()));
    }
    std::copy_n(v.data() + indices[i] * n, n, out.data() + i * n);
  }
  const std::uint32_t ai = a.id();
  std::vector<std::size_t> idx(indices.begin(), indices.end());
  return a.tape().make("gather_rows", {indices.size(), n}, std::move(out), {a},
                       [ai, n, idx = std::move(idx)](Tape& t, std::uint32_t self) {
                         double* ga = t.grad_buffer(ai);
                         if (!ga) return;
                         const auto& g = grd(t, self);
                         for (std::size_t i = 0; i < idx.size(); ++i)
                           for (std::size_t c = 0; c < n; ++c) ga[idx[i] * n + c] += g[i * n + c];
                       });
}

Tensor repeat_rows(const Tensor& a, std::size_t times) {
  std::vector<std::size_t> idx;
  idx.reserve(a.rows() * times);
  for (std::size_t r = 0; r < a.rows(); ++r)
    for (std::size_t k = 0; k < times; ++k) idx.push_back(r);
  return gather_rows(a, idx);
}

Tensor broadcast_add(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.cols();
  if (b.numel() != n || a.rank() < 1) shape_error("broadcast_add", a, b);
  const std::size_t m = a.numel() / n;
  std::vector<double> out(a.value().begin(), a.value().end());
  const auto bv = b.value();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] += bv[c];
  const std::uint32_t ai = a.id(), bi = b.id();
  return a.tape().make("broadcast_add", a.shape(), std::move(out), {a, b}, [ai, bi, m, n](Tape& t, std::uint32_t self) {
    const auto& g = grd(t, self);
    if (double* ga = t.grad_buffer(ai)) for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double* gb = t.grad_buffer(bi)) {
      for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
    }
  });
}

}  // namespace mgpc::ad
