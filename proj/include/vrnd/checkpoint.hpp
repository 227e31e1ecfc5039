#pragma once

// Model checkpoint container:
//   "VRNDCKPT"
//   str  format version
//   str  config as "key=value\n" lines
//   u64  tensor count
//   per tensor: str name, u32 rank, u64 dims[rank], f64 data (row-major)
// where str is a u32 length followed by the bytes; all integers and floats
// little-endian.

#include <cstdint>
#include <map>
#include <sstream>
#include <string>

#include "vrnd/binio.hpp"
#include "vrnd/errors.hpp"
#include "vrnd/vrnn.hpp"

namespace vrnd {

inline constexpr const char* kCheckpointVersion = "vrnd-checkpoint/1";

inline std::string config_to_text(const VrnnConfig& c) {
  std::ostringstream out;
  out << "frame_dim=" << c.frame_dim << '\n'
      << "latent_dim=" << c.latent_dim << '\n'
      << "hidden_dim=" << c.hidden_dim << '\n'
      << "feature_dim=" << c.feature_dim << '\n'
      << "head_layers=" << c.head_layers << '\n'
      << "feature_extractor=" << (c.feature_extractor ? 1 : 0) << '\n';
  return out.str();
}

inline VrnnConfig config_from_text(const std::string& text) {
  VrnnConfig c;
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("checkpoint config line without '=': " + line);
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  auto num = [&kv](const char* key) -> std::size_t {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(std::string("checkpoint config missing ") + key);
    return static_cast<std::size_t>(std::stoull(it->second));
  };
  c.frame_dim = num("frame_dim");
  c.latent_dim = num("latent_dim");
  c.hidden_dim = num("hidden_dim");
  c.feature_dim = num("feature_dim");
  c.head_layers = num("head_layers");
  c.feature_extractor = num("feature_extractor") != 0;
  c.validate();
  return c;
}

inline binio::Bytes encode_checkpoint(const VrnnParams& params) {
  binio::Bytes out;
  binio::put_tag(out, "VRNDCKPT");
  binio::put_str(out, kCheckpointVersion);
  binio::put_str(out, config_to_text(params.config));
  std::uint64_t count = 0;
  visit_params(params, [&count](const std::string&, const Tensor&) { ++count; });
  binio::put_u64(out, count);
  visit_params(params, [&out](const std::string& name, const Tensor& t) {
    binio::put_str(out, name);
    binio::put_u32(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) binio::put_u64(out, d);
    for (double v : t.data()) binio::put_f64(out, v);
  });
  return out;
}

inline VrnnParams decode_checkpoint(std::span<const std::uint8_t> bytes) {
  binio::Reader in(bytes);
  if (in.tag(8, "checkpoint magic") != "VRNDCKPT") throw ParseError("not a checkpoint (bad magic)", 0);
  const std::size_t version_at = in.offset();
  const std::string version = in.str("checkpoint version");
  if (version != kCheckpointVersion) throw ParseError("unsupported checkpoint version '" + version + "'", version_at);
  const VrnnConfig cfg = config_from_text(in.str("checkpoint config"));
  const std::uint64_t count = in.u64("tensor count");

  std::map<std::string, Tensor> stored;
  for (std::uint64_t k = 0; k < count; ++k) {
    const std::size_t at = in.offset();
    std::string name = in.str("tensor name");
    const std::uint32_t rank = in.u32("tensor rank");
    if (rank == 0 || rank > 2) throw ParseError("tensor '" + name + "' has unsupported rank", at);
    Shape shape(rank);
    for (auto& d : shape) {
      d = static_cast<std::size_t>(in.u64("tensor shape"));
      if (d == 0) throw ParseError("tensor '" + name + "' has a zero dimension", at);
    }
    const std::size_t n = shape_numel(shape);
    if (in.remaining() / 8 < n) throw ParseError("truncated data for tensor '" + name + "'", in.offset());
    std::vector<double> data(n);
    for (double& v : data) v = in.f64("tensor data");
    if (!stored.emplace(name, Tensor(shape, std::move(data))).second) throw ParseError("duplicate tensor '" + name + "'", at);
  }
  if (!in.done()) throw ParseError("trailing bytes after checkpoint", in.offset());

  VrnnParams params = zero_vrnn(cfg);
  std::size_t used = 0;
  visit_params(params, [&](const std::string& name, Tensor& t) {
    auto it = stored.find(name);
    if (it == stored.end()) throw ParseError("checkpoint is missing tensor '" + name + "'", bytes.size());
    if (it->second.shape() != t.shape()) {
      throw ParseError("tensor '" + name + "' has shape " + shape_str(it->second.shape()) + ", expected " +
                           shape_str(t.shape()),
                       bytes.size());
    }
    t = it->second;
    ++used;
  });
  if (used != stored.size()) throw ParseError("checkpoint holds tensors the model does not use", bytes.size());
  return params;
}

inline void save_checkpoint(const std::string& path, const VrnnParams& params) {
  binio::write_file(path, encode_checkpoint(params));
}

inline VrnnParams load_checkpoint(const std::string& path) { return decode_checkpoint(binio::read_file(path)); }

}  // namespace vrnd
