// SPDX-License-Identifier: Apache-2.0
#include "mgpc/model/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "mgpc/error.hpp"
#include "mgpc/mesh.hpp"

namespace mgpc::model {

std::string_view to_string(DecoderKind k) {
  switch (k) {
    case DecoderKind::progressive: return "progressive";
    case DecoderKind::folding: return "folding";
    case DecoderKind::mlp: return "mlp";
  }
  return "?";
}

std::string_view to_string(BranchCombine c) { return c == BranchCombine::sum ? "sum" : "concat_project"; }

std::string_view to_string(ModalitySet m) {
  switch (m) {
    case ModalitySet::all: return "all";
    case ModalitySet::image: return "image";
    case ModalitySet::text: return "text";
    case ModalitySet::none: return "none";
  }
  return "?";
}

DecoderKind parse_decoder(std::string_view s) {
  if (s == "progressive") return DecoderKind::progressive;
  if (s == "folding") return DecoderKind::folding;
  if (s == "mlp") return DecoderKind::mlp;
  throw InvalidArgument("unknown decoder '" + std::string(s) + "'");
}

BranchCombine parse_branch_combine(std::string_view s) {
  if (s == "sum") return BranchCombine::sum;
  if (s == "concat_project") return BranchCombine::concat_project;
  throw InvalidArgument("unknown branch combination '" + std::string(s) + "'");
}

ModalitySet parse_modality_set(std::string_view s) {
  if (s == "all") return ModalitySet::all;
  if (s == "image") return ModalitySet::image;
  if (s == "text") return ModalitySet::text;
  if (s == "none") return ModalitySet::none;
  throw InvalidArgument("unknown modality set '" + std::string(s) + "'");
}

ModelConfig::ModelConfig() : vocab(all_category_labels()) {}

std::size_t ModelConfig::condition_rows() const {
  switch (modalities) {
    case ModalitySet::image: return n_i();
    case ModalitySet::text: return 1;
    case ModalitySet::all:
    case ModalitySet::none: return n_i() + 1;
  }
  return n_i() + 1;
}

std::vector<std::size_t> ModelConfig::output_counts() const {
  switch (decoder) {
    case DecoderKind::progressive: {
      std::vector<std::size_t> out;
      for (std::size_t i = 0; i <= m_units; ++i) out.push_back(n_p << i);
      return out;
    }
    case DecoderKind::folding: return {n_p, n_c()};
    case DecoderKind::mlp: return {n_c()};
  }
  return {};
}

void ModelConfig::validate() const {
  auto fail = [](const std::string& msg) { throw InvalidArgument("model config: " + msg); };
  if (n_s == 0 || n_p == 0 || d == 0 || heads == 0 || k_nn == 0 || patch == 0) fail("sizes must be positive");
  if (n_p > n_s) fail("n_p=" + std::to_string(n_p) + " exceeds n_s=" + std::to_string(n_s));
  if (k_nn > n_s) fail("k_nn exceeds n_s");
  if (d % heads != 0) fail("d=" + std::to_string(d) + " is not divisible by heads=" + std::to_string(heads));
  if (!(p_drop >= 0.0 && p_drop <= 1.0)) fail("p_drop must lie in [0, 1]");
  if (image_width % patch != 0 || image_height % patch != 0) fail("image size must be divisible by patch");
  if (vocab.empty()) fail("vocabulary is empty");
  if (m_units > 16) fail("m_units too large");
  if (ffn_mult == 0) fail("ffn_mult must be positive");
}

std::map<std::string, std::string> ModelConfig::to_key_values() const {
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  std::string vocab_list;
  for (std::size_t i = 0; i < vocab.size(); ++i) vocab_list += (i ? "," : "") + vocab[i];
  return {
      {"n_s", std::to_string(n_s)},
      {"n_p", std::to_string(n_p)},
      {"d", std::to_string(d)},
      {"heads", std::to_string(heads)},
      {"n_blocks", std::to_string(n_blocks)},
      {"m_units", std::to_string(m_units)},
      {"k_nn", std::to_string(k_nn)},
      {"patch", std::to_string(patch)},
      {"image_width", std::to_string(image_width)},
      {"image_height", std::to_string(image_height)},
      {"encoder_layers", std::to_string(encoder_layers)},
      {"ffn_mult", std::to_string(ffn_mult)},
      {"p_drop", num(p_drop)},
      {"vocab", vocab_list},
      {"decoder", std::string(to_string(decoder))},
      {"branch_combine", std::string(to_string(branch_combine))},
      {"modalities", std::string(to_string(modalities))},
      {"anchor_residual", anchor_residual ? "1" : "0"},
      {"zero_init_offsets", zero_init_offsets ? "1" : "0"},
      {"freeze_encoders", freeze_encoders ? "1" : "0"},
      {"init_seed", std::to_string(init_seed)},
  };
}

ModelConfig ModelConfig::from_key_values(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  const auto known = c.to_key_values();
  for (const auto& [key, value] : kv) {
    if (!known.contains(key)) throw InvalidArgument("model config: unknown key '" + key + "'");
  }
  auto get = [&](const char* key) -> const std::string* {
    auto it = kv.find(key);
    return it == kv.end() ? nullptr : &it->second;
  };
  auto size = [&](const char* key, std::size_t& out) {
    if (auto* v = get(key)) {
      try {
        out = std::stoull(*v);
      } catch (const std::exception&) {
        throw InvalidArgument(std::string("model config: bad integer for '") + key + "': " + *v);
      }
    }
  };
  auto flag = [&](const char* key, bool& out) {
    if (auto* v = get(key)) out = (*v == "1" || *v == "true");
  };
  size("n_s", c.n_s);
  size("n_p", c.n_p);
  size("d", c.d);
  size("heads", c.heads);
  size("n_blocks", c.n_blocks);
  size("m_units", c.m_units);
  size("k_nn", c.k_nn);
  size("patch", c.patch);
  size("image_width", c.image_width);
  size("image_height", c.image_height);
  size("encoder_layers", c.encoder_layers);
  size("ffn_mult", c.ffn_mult);
  if (auto* v = get("p_drop")) c.p_drop = std::stod(*v);
  if (auto* v = get("vocab")) {
    c.vocab.clear();
    std::stringstream ss(*v);
    for (std::string item; std::getline(ss, item, ',');) {
      if (!item.empty()) c.vocab.push_back(item);
    }
  }
  if (auto* v = get("decoder")) c.decoder = parse_decoder(*v);
  if (auto* v = get("branch_combine")) c.branch_combine = parse_branch_combine(*v);
  if (auto* v = get("modalities")) c.modalities = parse_modality_set(*v);
  flag("anchor_residual", c.anchor_residual);
  flag("zero_init_offsets", c.zero_init_offsets);
  flag("freeze_encoders", c.freeze_encoders);
  if (auto* v = get("init_seed")) c.init_seed = std::stoull(*v);
  c.validate();
  return c;
}

std::string ModelConfig::to_text() const {
  std::string out;
  for (const auto& [key, value] : to_key_values()) out += key + " = " + value + "\n";
  return out;
}

ModelConfig ModelConfig::parse_text(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream in{std::string(text)};
  std::size_t line_no = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("model config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return from_key_values(kv);
}

void ModelConfig::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out << to_text();
  if (!out) throw IoError("write failed on '" + path + "'");
}

ModelConfig ModelConfig::read(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str());
}

std::vector<std::string> differing_keys(const ModelConfig& a, const ModelConfig& b) {
  const auto ka = a.to_key_values();
  const auto kb = b.to_key_values();
  std::vector<std::string> out;
  for (const auto& [key, value] : ka) {
    if (kb.at(key) != value) out.push_back(key);
  }
  return out;
}

ModelConfig gradcheck_config() {
  ModelConfig c;
  c.n_s = 32;
  c.n_p = 8;
  c.d = 16;
  c.heads = 2;
  c.n_blocks = 2;
  c.m_units = 2;
  c.k_nn = 4;
  c.patch = 8;
  c.image_width = 16;
  c.image_height = 16;
  c.zero_init_offsets = false;
  return c;
}

}  // namespace mgpc::model
