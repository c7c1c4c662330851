// SPDX-License-Identifier: Apache-2.0
#include "mgpc/model/model.hpp"

#include <algorithm>
#include <cmath>

#include "mgpc/ad/nn_ops.hpp"
#include "mgpc/error.hpp"

namespace mgpc::model {

using ad::Shape;

Availability Availability::parse(std::string_view s) {
  if (s == "all") return {true, true};
  if (s == "none") return {false, false};
  if (s == "image") return {true, false};
  if (s == "text") return {false, true};
  throw InvalidArgument("unknown modalities '" + std::string(s) + "' (expected all, none, image or text)");
}

namespace {

Rng param_rng(const ModelConfig& c, const std::string& name) { return make_rng({c.init_seed, hash_string(name)}); }

void add_linear(ParamStore& s, const ModelConfig& c, const std::string& prefix, std::size_t in, std::size_t out,
                bool zero = false, bool bias = true) {
  std::vector<double> w(in * out, 0.0);
  if (!zero) {
    Rng rng = param_rng(c, prefix + ".w");
    const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : w) v = dist(rng);
  }
  s.add(prefix + ".w", {in, out}, std::move(w));
  if (bias) s.add(prefix + ".b", {out}, std::vector<double>(out, 0.0));
}

void add_norm(ParamStore& s, const std::string& prefix, std::size_t d) {
  s.add(prefix + ".gain", {d}, std::vector<double>(d, 1.0));
  s.add(prefix + ".bias", {d}, std::vector<double>(d, 0.0));
}

void add_normal(ParamStore& s, const ModelConfig& c, const std::string& name, Shape shape, double stddev) {
  Rng rng = param_rng(c, name);
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = normal(rng, 0.0, stddev);
  s.add(name, std::move(shape), std::move(v));
}

// Keys carry no bias (see AttentionWeights).
void add_attention(ParamStore& s, const ModelConfig& c, const std::string& prefix) {
  for (const char* p : {"q", "k", "v", "o"}) add_linear(s, c, prefix + "." + p, c.d, c.d, false, *p != 'k');
}

Tensor lin(Tape& t, ParamStore& s, const std::string& prefix, const Tensor& x) {
  return ad::linear(x, t.parameter(s, prefix + ".w"), t.parameter(s, prefix + ".b"));
}

Tensor norm(Tape& t, ParamStore& s, const std::string& prefix, const Tensor& x) {
  return ad::layer_norm(x, t.parameter(s, prefix + ".gain"), t.parameter(s, prefix + ".bias"));
}

ad::AttentionWeights attention(Tape& t, ParamStore& s, const std::string& prefix) {
  auto w = [&](const char* p, const char* k) { return t.parameter(s, prefix + "." + p + "." + k); };
  return {w("q", "w"), w("q", "b"), w("k", "w"), Tensor(), w("v", "w"), w("v", "b"), w("o", "w"), w("o", "b")};
}

std::string block_prefix(std::size_t b) { return "fusion.block" + std::to_string(b); }
std::string unit_prefix(std::size_t u) { return "decoder.unit" + std::to_string(u); }

}  // namespace

bool is_encoder_param(const std::string& name) {
  return name.rfind("image_encoder.", 0) == 0 || name.rfind("text_encoder.", 0) == 0;
}

ParamStore init_params(const ModelConfig& c) {
  c.validate();
  ParamStore s;
  const std::size_t d = c.d;

  add_linear(s, c, "point_encoder.mlp1", 6, d);
  add_linear(s, c, "point_encoder.mlp2", d, d);
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    const std::string p = "point_encoder.attn" + std::to_string(l);
    add_norm(s, p + ".norm", d);
    add_attention(s, c, p);
  }

  if (c.uses_image()) {
    add_linear(s, c, "image_encoder.proj", c.patch * c.patch * 3, d);
    add_normal(s, c, "image_encoder.pos", {c.n_i(), d}, 0.02);
  }
  if (c.uses_text()) add_normal(s, c, "text_encoder.table", {c.vocab.size(), d}, 1.0);
  add_normal(s, c, "condition.learned", {c.condition_rows(), d}, 1.0);

  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    const std::string p = block_prefix(b);
    add_norm(s, p + ".norm_self", d);
    add_attention(s, c, p + ".self_attn");
    add_norm(s, p + ".norm_query", d);
    add_norm(s, p + ".norm_condition", d);
    add_attention(s, c, p + ".cross_attn");
    add_norm(s, p + ".norm_ffn", d);
    add_linear(s, c, p + ".ffn1", d, c.ffn_mult * d);
    add_linear(s, c, p + ".ffn2", c.ffn_mult * d, d);
  }

  switch (c.decoder) {
    case DecoderKind::progressive:
      add_linear(s, c, "decoder.coarse1", d, d);
      add_linear(s, c, "decoder.coarse2", d, 3);
      for (std::size_t u = 0; u < c.m_units; ++u) {
        const std::string p = unit_prefix(u);
        {
          Rng rng = param_rng(c, p + ".deconv");
          const double bound = std::sqrt(6.0 / static_cast<double>(2 * d));
          std::uniform_real_distribution<double> dist(-bound, bound);
          std::vector<double> k(d * d * 2);
          for (double& v : k) v = dist(rng);
          s.add(p + ".deconv", {d, d, 2}, std::move(k));
        }
        if (c.branch_combine == BranchCombine::concat_project) add_linear(s, c, p + ".combine", 2 * d, d);
        add_linear(s, c, p + ".offset1", d, d);
        add_linear(s, c, p + ".offset2", d, 3, c.zero_init_offsets);
      }
      break;
    case DecoderKind::folding:
      add_linear(s, c, "decoder.coarse1", d, d);
      add_linear(s, c, "decoder.coarse2", d, 3);
      add_linear(s, c, "decoder.fold1", d + 2, d);
      add_linear(s, c, "decoder.fold2", d, d);
      add_linear(s, c, "decoder.fold3", d, 3, c.zero_init_offsets);
      break;
    case DecoderKind::mlp:
      add_linear(s, c, "decoder.mlp1", d, 4 * d);
      add_linear(s, c, "decoder.mlp2", 4 * d, c.n_c() * 3);
      break;
  }

  if (c.freeze_encoders) {
    for (auto& [name, p] : s) {
      if (is_encoder_param(name)) p.frozen = true;
    }
  }
  return s;
}

Tensor cloud_tensor(Tape& tape, const PointCloud& cloud) {
  std::vector<double> v;
  v.reserve(cloud.size() * 3);
  for (const Vec3& p : cloud.points) v.insert(v.end(), {p.x(), p.y(), p.z()});
  return tape.constant({cloud.size(), 3}, std::move(v));
}

PointCloud tensor_cloud(const Tensor& t) {
  if (t.rank() != 2 || t.cols() != 3) throw InvalidArgument("tensor_cloud: expected [n, 3], got " + ad::shape_string(t.shape()));
  PointCloud out;
  const auto v = t.value();
  out.points.reserve(t.rows());
  for (std::size_t i = 0; i < t.rows(); ++i) out.points.emplace_back(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
  return out;
}

PointEncoding encode_points(Tape& tape, ParamStore& store, const ModelConfig& c, const PointCloud& partial) {
  if (c.n_p > partial.size()) {
    throw InvalidArgument("encode_points: n_p=" + std::to_string(c.n_p) + " exceeds input size " +
                          std::to_string(partial.size()));
  }
  if (c.k_nn > partial.size()) throw InvalidArgument("encode_points: k_nn exceeds input size");
  const auto anchor_idx = farthest_point_sample(partial, c.n_p, 0);
  PointCloud anchors = partial.select(anchor_idx);
  const auto neighbors = knn(partial, anchors, c.k_nn);

  const std::size_t k = c.k_nn;
  std::vector<double> feat(c.n_p * k * 6);
  for (std::size_t a = 0; a < c.n_p; ++a) {
    for (std::size_t j = 0; j < k; ++j) {
      const Vec3& q = partial[neighbors[a].indices[j]];
      const Vec3 off = q - anchors[a];
      double* row = &feat[(a * k + j) * 6];
      row[0] = off.x();
      row[1] = off.y();
      row[2] = off.z();
      row[3] = q.x();
      row[4] = q.y();
      row[5] = q.z();
    }
  }
  Tensor x = tape.constant({c.n_p * k, 6}, std::move(feat));
  x = ad::gelu(lin(tape, store, "point_encoder.mlp1", x));
  x = lin(tape, store, "point_encoder.mlp2", x);
  x = ad::reduce_max(ad::reshape(x, {c.n_p, k, c.d}), 1);
  for (std::size_t l = 0; l < c.encoder_layers; ++l) {
    const std::string p = "point_encoder.attn" + std::to_string(l);
    const Tensor h = norm(tape, store, p + ".norm", x);
    x = ad::add(x, ad::multi_head_attention(h, h, attention(tape, store, p), c.heads));
  }
  return {x, std::move(anchors)};
}

Tensor encode_image(Tape& tape, ParamStore& store, const ModelConfig& c, const Image& image) {
  if (image.width != c.image_width || image.height != c.image_height) {
    throw InvalidArgument("encode_image: image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                          ", model expects " + std::to_string(c.image_width) + "x" + std::to_string(c.image_height));
  }
  if (image.rgb.size() != static_cast<std::size_t>(image.width) * image.height * 3) {
    throw InvalidArgument("encode_image: pixel buffer size does not match dimensions");
  }
  const std::size_t P = c.patch;
  const std::size_t gx = c.image_width / P;
  const std::size_t gy = c.image_height / P;
  const std::size_t width = P * P * 3;
  std::vector<double> patches(gx * gy * width);
  for (std::size_t py = 0; py < gy; ++py) {
    for (std::size_t px = 0; px < gx; ++px) {
      double* row = &patches[(py * gx + px) * width];
      for (std::size_t y = 0; y < P; ++y) {
        for (std::size_t x = 0; x < P; ++x) {
          const std::size_t src = ((py * P + y) * image.width + (px * P + x)) * 3;
          for (std::size_t ch = 0; ch < 3; ++ch) row[(y * P + x) * 3 + ch] = image.rgb[src + ch] / 255.0;
        }
      }
    }
  }
  const Tensor x = tape.constant({gx * gy, width}, std::move(patches));
  return ad::add(lin(tape, store, "image_encoder.proj", x), tape.parameter(store, "image_encoder.pos"));
}

Tensor encode_text(Tape& tape, ParamStore& store, const ModelConfig& c, const std::string& label) {
  const auto it = std::find(c.vocab.begin(), c.vocab.end(), label);
  if (it == c.vocab.end()) throw InvalidArgument("encode_text: out-of-vocabulary label '" + label + "'");
  const std::size_t row = static_cast<std::size_t>(it - c.vocab.begin());
  return ad::gather_rows(tape.parameter(store, "text_encoder.table"), std::span<const std::size_t>(&row, 1));
}

ConditionTokens modality_dropout(Tape& tape, ParamStore& store, const ModelConfig& c, const Tensor& image_tokens,
                                 const Tensor& text_token, Mode mode, Availability availability, Rng& rng) {
  bool use_learned = false;
  bool applied = false;
  if (mode == Mode::train) {
    const double z = uniform01(rng);
    applied = z < c.p_drop;
    use_learned = applied || c.modalities == ModalitySet::none;
  } else {
    const bool missing = (c.uses_image() && !availability.image) || (c.uses_text() && !availability.text);
    use_learned = missing || c.modalities == ModalitySet::none || c.p_drop >= 1.0;
  }
  if (use_learned) return {tape.parameter(store, "condition.learned"), applied};
  switch (c.modalities) {
    case ModalitySet::image: return {image_tokens, false};
    case ModalitySet::text: return {text_token, false};
    default: return {ad::concat_rows({image_tokens, text_token}), false};
  }
}

Tensor fusion_forward(Tape& tape, ParamStore& store, const ModelConfig& c, const Tensor& point_tokens,
                      const Tensor& condition_tokens) {
  if (point_tokens.rank() != 2 || point_tokens.cols() != c.d || condition_tokens.rank() != 2 ||
      condition_tokens.cols() != c.d) {
    throw InvalidArgument("fusion_forward: token widths " + ad::shape_string(point_tokens.shape()) + " and " +
                          ad::shape_string(condition_tokens.shape()) + " do not match d=" + std::to_string(c.d));
  }
  Tensor x = point_tokens;
  for (std::size_t b = 0; b < c.n_blocks; ++b) {
    const std::string p = block_prefix(b);
    const Tensor h = norm(tape, store, p + ".norm_self", x);
    x = ad::add(x, ad::multi_head_attention(h, h, attention(tape, store, p + ".self_attn"), c.heads));
    const Tensor q = norm(tape, store, p + ".norm_query", x);
    const Tensor kv = norm(tape, store, p + ".norm_condition", condition_tokens);
    x = ad::add(x, ad::multi_head_attention(q, kv, attention(tape, store, p + ".cross_attn"), c.heads));
    const Tensor f = norm(tape, store, p + ".norm_ffn", x);
    x = ad::add(x, lin(tape, store, p + ".ffn2", ad::gelu(lin(tape, store, p + ".ffn1", f))));
  }
  return ad::add(x, point_tokens);
}

namespace {

Tensor coarse_stage(Tape& tape, ParamStore& store, const ModelConfig& c, const Tensor& fused,
                    const PointCloud& anchors) {
  Tensor coarse = lin(tape, store, "decoder.coarse2", ad::gelu(lin(tape, store, "decoder.coarse1", fused)));
  if (c.anchor_residual) coarse = ad::add(coarse, cloud_tensor(tape, anchors));
  return coarse;
}

}  // namespace

std::vector<Tensor> progressive_decode(Tape& tape, ParamStore& store, const ModelConfig& c, const Tensor& fused,
                                       const PointCloud& anchors) {
  std::vector<Tensor> scales{coarse_stage(tape, store, c, fused, anchors)};
  Tensor features = fused;
  for (std::size_t u = 0; u < c.m_units; ++u) {
    const std::string p = unit_prefix(u);
    const Tensor split = ad::transposed_conv1d_x2(features, tape.parameter(store, p + ".deconv"));
    const Tensor copied = ad::repeat_rows(features, 2);
    features = c.branch_combine == BranchCombine::sum
                   ? ad::add(split, copied)
                   : lin(tape, store, p + ".combine", ad::concat_cols({split, copied}));
    const Tensor offsets = lin(tape, store, p + ".offset2", ad::gelu(lin(tape, store, p + ".offset1", features)));
    scales.push_back(ad::add(ad::repeat_rows(scales.back(), 2), offsets));
  }
  return scales;
}

std::vector<double> folding_grid(std::size_t count) {
  std::size_t rows = static_cast<std::size_t>(std::sqrt(static_cast<double>(count)));
  while (rows > 1 && count % rows != 0) --rows;
  const std::size_t cols = count / rows;
  auto coord = [](std::size_t i, std::size_t n) {
    return n == 1 ? 0.0 : -0.05 + 0.1 * static_cast<double>(i) / static_cast<double>(n - 1);
  };
  std::vector<double> g;
  g.reserve(count * 2);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t q = 0; q < cols; ++q) g.insert(g.end(), {coord(r, rows), coord(q, cols)});
  }
  return g;
}

std::vector<Tensor> folding_decode(Tape& tape, ParamStore& store, const ModelConfig& c, const Tensor& fused,
                                   const PointCloud& anchors) {
  const Tensor coarse = coarse_stage(tape, store, c, fused, anchors);
  const std::size_t per = c.n_c() / c.n_p;
  const std::vector<double> cell = folding_grid(per);
  std::vector<double> tiled;
  tiled.reserve(c.n_c() * 2);
  for (std::size_t i = 0; i < c.n_p; ++i) tiled.insert(tiled.end(), cell.begin(), cell.end());
  const Tensor grid = tape.constant({c.n_c(), 2}, std::move(tiled));
  Tensor h = ad::concat_cols({ad::repeat_rows(fused, per), grid});
  h = ad::gelu(lin(tape, store, "decoder.fold1", h));
  h = ad::gelu(lin(tape, store, "decoder.fold2", h));
  const Tensor offsets = lin(tape, store, "decoder.fold3", h);
  return {coarse, ad::add(ad::repeat_rows(coarse, per), offsets)};
}

std::vector<Tensor> mlp_decode(Tape& tape, ParamStore& store, const ModelConfig& c, const Tensor& fused) {
  const Tensor pooled = ad::reshape(ad::reduce_max(fused, 0), {1, c.d});
  const Tensor h = ad::gelu(lin(tape, store, "decoder.mlp1", pooled));
  return {ad::reshape(lin(tape, store, "decoder.mlp2", h), {c.n_c(), 3})};
}

std::vector<Tensor> decode(Tape& tape, ParamStore& store, const ModelConfig& c, const Tensor& fused,
                           const PointCloud& anchors) {
  switch (c.decoder) {
    case DecoderKind::progressive: return progressive_decode(tape, store, c, fused, anchors);
    case DecoderKind::folding: return folding_decode(tape, store, c, fused, anchors);
    case DecoderKind::mlp: return mlp_decode(tape, store, c, fused);
  }
  return {};
}

ForwardResult forward(Tape& tape, ParamStore& store, const ModelConfig& c, const Sample& sample, Mode mode,
                      Availability availability, Rng& rng) {
  const PointEncoding enc = encode_points(tape, store, c, sample.partial);
  Tensor image_tokens;
  Tensor text_token;
  // Encoders are skipped when their tokens cannot reach the condition block.
  const bool image_needed = c.uses_image() && (mode == Mode::train || availability.image);
  const bool text_needed = c.uses_text() && (mode == Mode::train || availability.text);
  if (image_needed) image_tokens = encode_image(tape, store, c, sample.image);
  if (text_needed) text_token = encode_text(tape, store, c, sample.text_label);
  const ConditionTokens cond = modality_dropout(tape, store, c, image_tokens, text_token, mode, availability, rng);
  const Tensor fused = fusion_forward(tape, store, c, enc.tokens, cond.tokens);
  return {decode(tape, store, c, fused, enc.anchors), cond.dropout_applied};
}

}  // namespace mgpc::model
