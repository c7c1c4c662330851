// SPDX-License-Identifier: Apache-2.0
#include "mgpc/train/loss.hpp"

#include <cmath>

#include "mgpc/error.hpp"
#include "mgpc/metrics.hpp"
#include "mgpc/model/model.hpp"

namespace mgpc::train {

LossConfig LossConfig::uniform(std::size_t scales, double alpha) {
  return {alpha, std::vector<double>(scales, 1.0)};
}

void LossConfig::validate(std::size_t scales) const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw InvalidArgument("loss config: alpha must be positive");
  if (betas.size() != scales) {
    throw InvalidArgument("loss config: " + std::to_string(betas.size()) + " scale weights for " +
                          std::to_string(scales) + " scales");
  }
  bool any = false;
  for (double b : betas) {
    if (!(b >= 0.0) || !std::isfinite(b)) throw InvalidArgument("loss config: scale weights must be non-negative");
    any = any || b > 0.0;
  }
  if (!any) throw InvalidArgument("loss config: at least one scale weight must be positive");
}

std::vector<PointCloud> multiscale_gt(const PointCloud& complete, const std::vector<std::size_t>& scales) {
  if (scales.empty()) throw InvalidArgument("multiscale_gt: no scales");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    if (scales[i] > complete.size()) {
      throw InvalidArgument("multiscale_gt: scale " + std::to_string(scales[i]) + " exceeds complete size " +
                            std::to_string(complete.size()));
    }
    if (i > 0 && scales[i] < scales[i - 1]) throw InvalidArgument("multiscale_gt: scales must be ascending");
  }
  if (scales.back() != complete.size()) throw InvalidArgument("multiscale_gt: last scale must equal complete size");
  std::vector<PointCloud> out;
  out.reserve(scales.size());
  std::vector<std::size_t> order;
  if (scales.size() > 1) order = farthest_point_sample(complete, scales[scales.size() - 2], 0);
  for (std::size_t i = 0; i + 1 < scales.size(); ++i) {
    out.push_back(complete.select(std::span<const std::size_t>(order.data(), scales[i])));
  }
  out.push_back(complete);
  return out;
}

Tensor hyper_chamfer(const Tensor& pred, const PointCloud& gt, double alpha) {
  if (pred.rank() != 2 || pred.cols() != 3) {
    throw InvalidArgument("hyper_chamfer: prediction must be [n, 3], got " + ad::shape_string(pred.shape()));
  }
  if (gt.empty() || pred.rows() == 0) throw InvalidArgument("hyper_chamfer: empty cloud");
  const PointCloud p = model::tensor_cloud(pred);
  const double value = metrics::hyper_cd(p, gt, alpha);

  const auto forward_nn = nearest_neighbors(gt, p);
  const auto backward_nn = nearest_neighbors(p, gt);
  const std::size_t n = p.size();
  const std::size_t m = gt.size();
  // d value / d pred, computed eagerly and scaled by the upstream gradient.
  std::vector<double> local(n * 3, 0.0);
  auto accumulate = [&](std::size_t i, const Vec3& target, double weight) {
    const Vec3 diff = p[i] - target;
    const double dist = diff.norm();
    const double g = metrics::hyperbolic_term_derivative(dist, alpha);
    if (g == 0.0) return;
    const Vec3 dir = diff * (weight * g / dist);
    local[3 * i] += dir.x();
    local[3 * i + 1] += dir.y();
    local[3 * i + 2] += dir.z();
  };
  for (std::size_t i = 0; i < n; ++i) accumulate(i, gt[forward_nn[i].index], 1.0 / static_cast<double>(n));
  for (std::size_t j = 0; j < m; ++j) accumulate(backward_nn[j].index, gt[j], 1.0 / static_cast<double>(m));

  const std::uint32_t in = pred.id();
  return pred.tape().make("hyper_chamfer", {1}, {value}, {pred},
                          [in, local = std::move(local)](ad::Tape& t, std::uint32_t self) {
                            double* g = t.grad_buffer(in);
                            if (!g) return;
                            const double up = t.node(self).grad[0];
                            for (std::size_t k = 0; k < local.size(); ++k) g[k] += up * local[k];
                          });
}

Tensor total_loss(const std::vector<Tensor>& preds, const std::vector<PointCloud>& gts, const LossConfig& config) {
  if (preds.size() != gts.size()) {
    throw InvalidArgument("total_loss: " + std::to_string(preds.size()) + " predicted scales for " +
                          std::to_string(gts.size()) + " ground-truth scales");
  }
  config.validate(preds.size());
  Tensor total;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i].rows() != gts[i].size()) {
      throw InvalidArgument("total_loss: scale " + std::to_string(i) + " has " + std::to_string(preds[i].rows()) +
                            " predicted points and " + std::to_string(gts[i].size()) + " ground-truth points");
    }
    if (config.betas[i] == 0.0) continue;
    Tensor term = hyper_chamfer(preds[i], gts[i], config.alpha);
    if (config.betas[i] != 1.0) term = ad::scale(term, config.betas[i]);
    total = total.valid() ? ad::add(total, term) : term;
  }
  return total;
}

}  // namespace mgpc::train
