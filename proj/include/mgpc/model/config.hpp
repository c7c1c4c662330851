// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace mgpc::model {

enum class DecoderKind { progressive, folding, mlp };
enum class BranchCombine { sum, concat_project };
/// Auxiliary encoders present in the architecture.
enum class ModalitySet { all, image, text, none };

std::string_view to_string(DecoderKind k);
std::string_view to_string(BranchCombine c);
std::string_view to_string(ModalitySet m);
DecoderKind parse_decoder(std::string_view s);
BranchCombine parse_branch_combine(std::string_view s);
ModalitySet parse_modality_set(std::string_view s);

struct ModelConfig {
  std::size_t n_s = 512;       // input points
  std::size_t n_p = 512;       // point tokens
  std::size_t d = 64;          // token width
  std::size_t heads = 4;
  std::size_t n_blocks = 2;    // fusion depth
  std::size_t m_units = 2;     // upsampling units
  std::size_t k_nn = 16;       // encoder neighborhood
  std::size_t patch = 16;      // image patch side
  std::size_t image_width = 64;
  std::size_t image_height = 64;
  std::size_t encoder_layers = 2;
  std::size_t ffn_mult = 4;
  double p_drop = 0.5;
  std::vector<std::string> vocab;
  DecoderKind decoder = DecoderKind::progressive;
  BranchCombine branch_combine = BranchCombine::sum;
  ModalitySet modalities = ModalitySet::all;
  bool anchor_residual = true;
  bool zero_init_offsets = true;
  bool freeze_encoders = false;
  std::uint64_t init_seed = 0;

  ModelConfig();

  std::size_t n_c() const { return n_p << m_units; }
  std::size_t n_i() const { return (image_width / patch) * (image_height / patch); }
  bool uses_image() const { return modalities == ModalitySet::all || modalities == ModalitySet::image; }
  bool uses_text() const { return modalities == ModalitySet::all || modalities == ModalitySet::text; }
  /// Rows of the condition-token block (and of the learnable placeholder).
  std::size_t condition_rows() const;
  /// Point counts of every decoder output, coarse to fine.
  std::vector<std::size_t> output_counts() const;

  /// Throws InvalidArgument describing the first violated invariant.
  void validate() const;

  std::map<std::string, std::string> to_key_values() const;
  static ModelConfig from_key_values(const std::map<std::string, std::string>& kv);

  /// Flat "key = value" text, one key per line.
  std::string to_text() const;
  static ModelConfig parse_text(std::string_view text);
  void write(const std::string& path) const;
  static ModelConfig read(const std::string& path);
};

/// Keys whose values differ between two configs.
std::vector<std::string> differing_keys(const ModelConfig& a, const ModelConfig& b);

/// Small configuration used for finite-difference checks (d = 16).
ModelConfig gradcheck_config();

}  // namespace mgpc::model
