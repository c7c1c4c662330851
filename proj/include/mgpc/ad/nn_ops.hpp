// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "mgpc/ad/tensor.hpp"

namespace mgpc::ad {

/// x [n, in] * w [in, out] + b [out].
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

/// Projection set of one attention layer; every matrix is [d, d] and every
/// bias holds d elements. `bk` may be left invalid: a key bias shifts every
/// score of a query row equally, so softmax makes it inert.
struct AttentionWeights {
  Tensor wq, bq, wk, bk, wv, bv, wo, bo;
};

/// Scaled dot-product attention with `heads` heads. Queries come from q_in
/// [n_q, d]; keys and values from kv_in [n_kv, d]. Returns [n_q, d].
Tensor multi_head_attention(const Tensor& q_in, const Tensor& kv_in, const AttentionWeights& w,
                            std::size_t heads);

/// Stride-2 transposed 1D convolution along the token axis with kernel
/// [d_in, d_out, 2]: input row j emits output rows 2j and 2j+1 through kernel
/// slices 0 and 1. Returns [2n, d_out].
Tensor transposed_conv1d_x2(const Tensor& features, const Tensor& kernel);

}  // namespace mgpc::ad
