// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "mgpc/ad/param_store.hpp"
#include "mgpc/ad/tensor.hpp"
#include "mgpc/geometry.hpp"
#include "mgpc/model/config.hpp"
#include "mgpc/render.hpp"
#include "mgpc/rng.hpp"
#include "mgpc/sample.hpp"

namespace mgpc::model {

using ad::ParamStore;
using ad::Tape;
using ad::Tensor;

enum class Mode { train, infer };

/// Auxiliary inputs present at inference.
struct Availability {
  bool image = true;
  bool text = true;

  static Availability all() { return {true, true}; }
  static Availability none() { return {false, false}; }
  /// Parses "all", "none", "image" or "text".
  static Availability parse(std::string_view s);
};

struct PointEncoding {
  Tensor tokens;       // [n_p, d]
  PointCloud anchors;  // n_p FPS anchors of the partial
};

struct ConditionTokens {
  Tensor tokens;
  bool dropout_applied = false;
};

struct ForwardResult {
  std::vector<Tensor> scales;  // coarse to fine
  bool dropout_applied = false;
};

/// Creates every learnable parameter for `config`. Each parameter draws from
/// its own stream keyed by (config.init_seed, name), so parameters shared by
/// two architectures start identical.
ParamStore init_params(const ModelConfig& config);

PointEncoding encode_points(Tape& tape, ParamStore& store, const ModelConfig& config, const PointCloud& partial);
Tensor encode_image(Tape& tape, ParamStore& store, const ModelConfig& config, const Image& image);
Tensor encode_text(Tape& tape, ParamStore& store, const ModelConfig& config, const std::string& label);

/// Condition-token selection with modality dropout. In train mode exactly one U(0,1) value is
/// drawn from `rng`, whatever the architecture. A condition pathway that is
/// never trained (p_drop == 1) or an architecture without both encoders
/// resolves its missing inputs to the placeholder block.
ConditionTokens modality_dropout(Tape& tape, ParamStore& store, const ModelConfig& config, const Tensor& image_tokens,
                                 const Tensor& text_token, Mode mode, Availability availability, Rng& rng);

Tensor fusion_forward(Tape& tape, ParamStore& store, const ModelConfig& config, const Tensor& point_tokens,
                      const Tensor& condition_tokens);

/// Dispatches to the configured decode head. Every head ends at n_c points.
std::vector<Tensor> decode(Tape& tape, ParamStore& store, const ModelConfig& config, const Tensor& fused,
                           const PointCloud& anchors);
std::vector<Tensor> progressive_decode(Tape& tape, ParamStore& store, const ModelConfig& config, const Tensor& fused,
                                       const PointCloud& anchors);
std::vector<Tensor> folding_decode(Tape& tape, ParamStore& store, const ModelConfig& config, const Tensor& fused,
                                   const PointCloud& anchors);
std::vector<Tensor> mlp_decode(Tape& tape, ParamStore& store, const ModelConfig& config, const Tensor& fused);

ForwardResult forward(Tape& tape, ParamStore& store, const ModelConfig& config, const Sample& sample, Mode mode,
                      Availability availability, Rng& rng);

/// Fixed 2D grid deformed by the folding head: `count` points in [-0.05, 0.05]^2.
std::vector<double> folding_grid(std::size_t count);

Tensor cloud_tensor(Tape& tape, const PointCloud& cloud);
PointCloud tensor_cloud(const Tensor& t);

/// Names of image/text encoder parameters (the ones `freeze_encoders` freezes).
bool is_encoder_param(const std::string& name);

}  // namespace mgpc::model
