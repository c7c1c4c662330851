// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "mgpc/ad/tensor.hpp"

namespace mgpc::ad {

struct Parameter {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  std::vector<double> m;  // AdamW first moment
  std::vector<double> v;  // AdamW second moment
  bool frozen = false;

  friend bool operator==(const Parameter& a, const Parameter& b) {
    return a.shape == b.shape && a.value == b.value && a.m == b.m && a.v == b.v;
  }
};

/// Learnable parameters keyed by dotted path, iterated in name order.
class ParamStore {
 public:
  Parameter& add(const std::string& name, Shape shape, std::vector<double> value);
  Parameter& at(const std::string& name);
  const Parameter& at(const std::string& name) const;
  bool contains(const std::string& name) const { return params_.contains(name); }

  std::vector<std::string> names() const;
  std::size_t size() const noexcept { return params_.size(); }
  std::size_t total_elements() const;

  void zero_grad();
  void scale_grad(double factor);

  std::uint64_t step() const noexcept { return step_; }
  void set_step(std::uint64_t s) noexcept { step_ = s; }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Values, moments and step must match; gradients are ignored.
  friend bool operator==(const ParamStore& a, const ParamStore& b) {
    return a.step_ == b.step_ && a.params_ == b.params_;
  }

 private:
  std::map<std::string, Parameter> params_;
  std::uint64_t step_ = 0;
};

struct AdamWConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled-weight-decay Adam with bias correction, applied to every
/// non-frozen parameter using its accumulated gradient. Increments the step
/// counter. Throws NumericError naming the first parameter with a non-finite
/// gradient; no parameter is modified in that case.
void adamw_step(ParamStore& store, const AdamWConfig& config);

inline constexpr char kCheckpointMagic[4] = {'M', 'G', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& store);
ParamStore decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void write_checkpoint(const std::string& path, const ParamStore& store);
ParamStore read_checkpoint(const std::string& path);

}  // namespace mgpc::ad
