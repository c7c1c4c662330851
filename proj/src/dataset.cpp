// SPDX-License-Identifier: Apache-2.0
#include "mgpc/dataset.hpp"

#include <fstream>
#include <limits>

#include "mgpc/binary_io.hpp"
#include "mgpc/error.hpp"

namespace mgpc {

std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed on '" + path + "'");
  return bytes;
}

void write_file_bytes(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed on '" + path + "'");
}

namespace {

void put_vec3(ByteWriter& w, const Vec3& v) {
  w.f32(static_cast<float>(v.x()));
  w.f32(static_cast<float>(v.y()));
  w.f32(static_cast<float>(v.z()));
}

Vec3 get_vec3(ByteReader& r) {
  const double x = r.f32();
  const double y = r.f32();
  const double z = r.f32();
  return Vec3(x, y, z);
}

std::uint16_t checked_u16(std::size_t v, const char* what) {
  if (v > std::numeric_limits<std::uint16_t>::max()) {
    throw InvalidArgument(std::string("dataset: ") + what + " exceeds u16 range");
  }
  return static_cast<std::uint16_t>(v);
}

void put_cloud(ByteWriter& w, const PointCloud& c) {
  w.u32(static_cast<std::uint32_t>(c.size()));
  for (const Vec3& p : c.points) put_vec3(w, p);
}

PointCloud get_cloud(ByteReader& r) {
  const std::uint32_t n = r.u32();
  r.require(std::size_t{n} * 12);
  PointCloud c;
  c.points.reserve(n);
  for (std::uint32_t i = 0; i < n; ++i) c.points.push_back(get_vec3(r));
  return c;
}

}  // namespace

std::vector<std::uint8_t> encode_dataset(std::span<const Sample> samples) {
  ByteWriter w;
  w.bytes(std::string_view(kDatasetMagic, 4));
  w.u32(kDatasetVersion);
  w.u64(samples.size());
  for (const Sample& s : samples) {
    w.u32(s.category_id);
    w.u16(checked_u16(s.text_label.size(), "label length"));
    w.bytes(s.text_label);
    put_vec3(w, s.norm.centroid);
    w.f32(static_cast<float>(s.norm.scale));
    put_vec3(w, s.pose.position);
    put_vec3(w, s.pose.look_at);
    put_vec3(w, s.pose.up_hint);
    w.f32(static_cast<float>(s.pose.focal_px));
    w.u16(checked_u16(s.pose.width, "camera width"));
    w.u16(checked_u16(s.pose.height, "camera height"));
    put_cloud(w, s.partial);
    put_cloud(w, s.complete);
    w.u16(checked_u16(s.image.width, "image width"));
    w.u16(checked_u16(s.image.height, "image height"));
    if (s.image.rgb.size() != std::size_t{s.image.width} * s.image.height * 3) {
      throw InvalidArgument("dataset: image buffer does not match its dimensions");
    }
    w.bytes(s.image.rgb.data(), s.image.rgb.size());
  }
  return w.take();
}

std::vector<Sample> decode_dataset(const std::vector<std::uint8_t>& bytes) {
  ByteReader r(bytes);
  r.set_context("header");
  const std::string magic = r.string(4);
  if (magic != std::string_view(kDatasetMagic, 4)) throw FormatError("bad dataset magic", 0);
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) {
    throw FormatError("unsupported dataset version " + std::to_string(version), 4);
  }
  const std::uint64_t count = r.u64();
  std::vector<Sample> samples;
  for (std::uint64_t i = 0; i < count; ++i) {
    r.set_context("record " + std::to_string(i) + " starting at offset " + std::to_string(r.offset()));
    Sample s;
    s.category_id = r.u32();
    const std::uint16_t label_len = r.u16();
    s.text_label = r.string(label_len);
    s.norm.centroid = get_vec3(r);
    s.norm.scale = r.f32();
    s.pose.position = get_vec3(r);
    s.pose.look_at = get_vec3(r);
    s.pose.up_hint = get_vec3(r);
    s.pose.focal_px = r.f32();
    s.pose.width = r.u16();
    s.pose.height = r.u16();
    s.partial = get_cloud(r);
    s.complete = get_cloud(r);
    s.image.width = r.u16();
    s.image.height = r.u16();
    s.image.rgb.resize(std::size_t{s.image.width} * s.image.height * 3);
    r.bytes(s.image.rgb.data(), s.image.rgb.size());
    samples.push_back(std::move(s));
  }
  if (r.remaining() != 0) {
    throw FormatError(std::to_string(r.remaining()) + " trailing bytes after " + std::to_string(count) +
                          " records",
                      r.offset());
  }
  return samples;
}

void write_dataset(const std::string& path, std::span<const Sample> samples) {
  write_file_bytes(path, encode_dataset(samples));
}

std::vector<Sample> read_dataset(const std::string& path) { return decode_dataset(read_file_bytes(path)); }

}  // namespace mgpc
