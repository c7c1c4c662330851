// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mgpc/sample.hpp"

namespace mgpc {

inline constexpr char kDatasetMagic[4] = {'M', 'G', 'P', 'C'};
inline constexpr std::uint32_t kDatasetVersion = 1;

/// Serializes samples in the little-endian "MGPC" v1 layout. Reals are
/// written as f32; samples produced by make_sample round-trip bit-exactly.
std::vector<std::uint8_t> encode_dataset(std::span<const Sample> samples);
std::vector<Sample> decode_dataset(const std::vector<std::uint8_t>& bytes);

void write_dataset(const std::string& path, std::span<const Sample> samples);
std::vector<Sample> read_dataset(const std::string& path);

}  // namespace mgpc
