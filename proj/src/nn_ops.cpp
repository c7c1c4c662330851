// SPDX-License-Identifier: Apache-2.0
#include "mgpc/ad/nn_ops.hpp"

#include <array>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "mgpc/error.hpp"

namespace mgpc::ad {

namespace {
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const Matrix>;
using Map = Eigen::Map<Matrix>;
}  // namespace

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) { return broadcast_add(matmul(x, w), b); }

Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionWeights& w,
                            std::size_t heads) {
  const std::size_t d = q_in.cols();
  if (heads == 0 || d % heads != 0) {
    throw InvalidArgument("multi_head_attention: d=" + std::to_string(d) + " is not divisible by heads=" +
                          std::to_string(heads));
  }
  if (kv_in.cols() != d) {
    throw InvalidArgument("multi_head_attention: query " + shape_string(q_in.shape()) + " and key/value " +
                          shape_string(kv_in.shape()) + " widths differ");
  }
  const Tensor q = linear(q_in, w.wq, w.bq);
  const Tensor k = w.bk.valid() ? linear(kv_in, w.wk, w.bk) : matmul(kv_in, w.wk);
  const Tensor v = linear(kv_in, w.wv, w.bv);
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<Tensor> outs;
  outs.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const Tensor qh = heads == 1 ? q : slice_cols(q, h * dh, dh);
    const Tensor kh = heads == 1 ? k : slice_cols(k, h * dh, dh);
    const Tensor vh = heads == 1 ? v : slice_cols(v, h * dh, dh);
    const Tensor weights = softmax_rows(scale(matmul(qh, transpose(kh)), inv_sqrt));
    outs.push_back(matmul(weights, vh));
  }
  const Tensor merged = heads == 1 ? outs[0] : concat_cols(outs);
  return linear(merged, w.wo, w.bo);
}

Tensor transposed_conv1d_x2(const Tensor& features, const Tensor& kernel) {
  if (features.rank() != 2) {
    throw InvalidArgument("transposed_conv1d_x2: expected rank-2 features, got " + shape_string(features.shape()));
  }
  const std::size_t n = features.rows(), din = features.cols();
  if (kernel.rank() != 3 || kernel.dim(0) != din || kernel.dim(2) != 2) {
    throw InvalidArgument("transposed_conv1d_x2: kernel " + shape_string(kernel.shape()) +
                          " does not match features " + shape_string(features.shape()));
  }
  const std::size_t dout = kernel.dim(1);
  // Split the interleaved kernel into its two [din, dout] slices.
  auto slices = [din, dout](std::span<const double> k) {
    std::array<Matrix, 2> s{Matrix(din, dout), Matrix(din, dout)};
    for (std::size_t i = 0; i < din; ++i)
      for (std::size_t o = 0; o < dout; ++o)
        for (std::size_t t = 0; t < 2; ++t) s[t](i, o) = k[(i * dout + o) * 2 + t];
    return s;
  };
  const auto ks = slices(kernel.value());
  const MapC f(features.value().data(), n, din);
  std::vector<double> out(2 * n * dout);
  // Output rows 2j + t form a [n, 2*dout] row-major block per slice pair.
  Map block(out.data(), n, 2 * dout);
  block.leftCols(dout) = f * ks[0];
  block.rightCols(dout) = f * ks[1];
  const std::uint32_t fi = features.id(), ki = kernel.id();
  return features.tape().make(
      "transposed_conv1d_x2", {2 * n, dout}, std::move(out), {features, kernel},
      [fi, ki, n, din, dout, slices](Tape& t, std::uint32_t self) {
        const MapC g(t.node(self).grad.data(), n, 2 * dout);
        if (double* gf = t.grad_buffer(fi)) {
          const auto k = slices(t.node(ki).value);
          Map(gf, n, din).noalias() += g.leftCols(dout) * k[0].transpose() + g.rightCols(dout) * k[1].transpose();
        }
        if (double* gk = t.grad_buffer(ki)) {
          const MapC f(t.node(fi).value.data(), n, din);
          const Matrix g0 = f.transpose() * g.leftCols(dout);
          const Matrix g1 = f.transpose() * g.rightCols(dout);
          for (std::size_t i = 0; i < din; ++i)
            for (std::size_t o = 0; o < dout; ++o) {
              gk[(i * dout + o) * 2 + 0] += g0(i, o);
              gk[(i * dout + o) * 2 + 1] += g1(i, o);
            }
        }
      });
}

}  // namespace mgpc::ad
