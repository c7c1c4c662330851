// SPDX-License-Identifier: Apache-2.0
#include "mgpc/ad/param_store.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "mgpc/binary_io.hpp"
#include "mgpc/error.hpp"

namespace mgpc::ad {

Parameter& ParamStore::add(const std::string& name, Shape shape, std::vector<double> value) {
  if (params_.contains(name)) throw InvalidArgument("ParamStore: duplicate parameter '" + name + "'");
  if (numel(shape) != value.size()) {
    throw InvalidArgument("ParamStore: '" + name + "' has " + std::to_string(value.size()) +
                          " values for shape " + shape_string(shape));
  }
  Parameter p;
  const std::size_t n = value.size();
  p.shape = std::move(shape);
  p.value = std::move(value);
  p.grad.assign(n, 0.0);
  p.m.assign(n, 0.0);
  p.v.assign(n, 0.0);
  return params_.emplace(name, std::move(p)).first->second;
}

Parameter& ParamStore::at(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

const Parameter& ParamStore::at(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InvalidArgument("ParamStore: unknown parameter '" + name + "'");
  return it->second;
}

std::vector<std::string> ParamStore::names() const {
  std::vector<std::string> out;
  out.reserve(params_.size());
  for (const auto& [name, p] : params_) out.push_back(name);
  return out;
}

std::size_t ParamStore::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, p] : params_) n += p.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& [name, p] : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0);
}

void ParamStore::scale_grad(double factor) {
  for (auto& [name, p] : params_) {
    for (double& g : p.grad) g *= factor;
  }
}

void adamw_step(ParamStore& store, const AdamWConfig& config) {
  for (const auto& [name, p] : store) {
    if (p.frozen) continue;
    for (double g : p.grad) {
      if (!std::isfinite(g)) throw NumericError("adamw_step: non-finite gradient in parameter '" + name + "'");
    }
  }
  const std::uint64_t t = store.step() + 1;
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(t));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(t));
  const double decay = 1.0 - config.lr * config.weight_decay;
  for (auto& [name, p] : store) {
    if (p.frozen) continue;
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      p.value[i] *= decay;
      p.m[i] = config.beta1 * p.m[i] + (1.0 - config.beta1) * g;
      p.v[i] = config.beta2 * p.v[i] + (1.0 - config.beta2) * g * g;
      const double m_hat = p.m[i] / bc1;
      const double v_hat = p.v[i] / bc2;
      p.value[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
    }
  }
  store.set_step(t);
}

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& store) {
  ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, 4));
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, p] : store) {
    if (name.size() > std::numeric_limits<std::uint16_t>::max()) {
      throw InvalidArgument("checkpoint: parameter name too long");
    }
    if (p.shape.size() > std::numeric_limits<std::uint8_t>::max()) {
      throw InvalidArgument("checkpoint: parameter rank too large");
    }
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(p.shape.size()));
    for (std::size_t d : p.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double x : p.value) w.f64(x);
    for (double x : p.m) w.f64(x);
    for (double x : p.v) w.f64(x);
  }
  w.u64(store.step());
  return w.take();
}

ParamStore decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.set_context("checkpoint header");
  if (r.string(4) != std::string_view(kCheckpointMagic, 4)) throw FormatError("bad checkpoint magic", 0);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), 4);
  }
  const std::uint32_t count = r.u32();
  ParamStore store;
  for (std::uint32_t i = 0; i < count; ++i) {
    r.set_context("checkpoint parameter " + std::to_string(i));
    const std::string name = r.string(r.u16());
    const std::uint8_t rank = r.u8();
    Shape shape(rank);
    for (auto& d : shape) d = r.u32();
    const std::size_t n = numel(shape);
    r.require(n * 8 * 3);
    std::vector<double> value(n);
    for (double& x : value) x = r.f64();
    Parameter& p = store.add(name, std::move(shape), std::move(value));
    for (double& x : p.m) x = r.f64();
    for (double& x : p.v) x = r.f64();
  }
  r.set_context("checkpoint trailer");
  store.set_step(r.u64());
  if (r.remaining() != 0) throw FormatError("trailing bytes after checkpoint", r.offset());
  return store;
}

void write_checkpoint(const std::string& path, const ParamStore& store) {
  write_file_bytes(path, encode_checkpoint(store));
}

ParamStore read_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace mgpc::ad
