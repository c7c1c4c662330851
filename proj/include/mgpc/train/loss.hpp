// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "mgpc/ad/tensor.hpp"
#include "mgpc/geometry.hpp"

namespace mgpc::train {

using ad::Tensor;

struct LossConfig {
  double alpha = 1.0;
  std::vector<double> betas;  // one weight per supervised scale

  /// Unit weights for `scales` scales.
  static LossConfig uniform(std::size_t scales, double alpha = 1.0);
  /// Throws InvalidArgument unless alpha > 0, betas are non-negative and
  /// finite, at least one is positive and there are `scales` of them.
  void validate(std::size_t scales) const;
};

/// Ground truth per scale: the last entry is `complete` itself and every
/// coarser one is a prefix of a single FPS ordering of it (seed index 0), so
/// coarser sets are nested in finer ones.
std::vector<PointCloud> multiscale_gt(const PointCloud& complete, const std::vector<std::size_t>& scales);

/// Differentiable hyperbolic Chamfer distance between a predicted [n, 3]
/// tensor and a fixed cloud. Its value is bit-identical to metrics::hyper_cd
/// on the same coordinates.
Tensor hyper_chamfer(const Tensor& pred, const PointCloud& gt, double alpha);

/// Weighted sum of hyper_chamfer over aligned scales. Scales with zero weight
/// are skipped entirely.
Tensor total_loss(const std::vector<Tensor>& preds, const std::vector<PointCloud>& gts, const LossConfig& config);

}  // namespace mgpc::train
