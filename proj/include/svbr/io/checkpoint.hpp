#pragma once

#include <map>
#include <memory>
#include <sstream>
#include <string>

#include "svbr/io/binary.hpp"
#include "svbr/network.hpp"

namespace svbr::io {

// Checkpoint layout (little-endian):
//   "SVBR", u16 version,
//   u32 metadata length + UTF-8 "key=value\n" lines (depth, base_width),
//   then until end of file one record per parameter or buffer:
//   u16 name length, name bytes, u8 rank, u32 dims[rank], float32 values
//   in row-major order.
inline constexpr char kCheckpointMagic[4] = {'S', 'V', 'B', 'R'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

template <class T>
Bytes encode_checkpoint(const Network<T>& net) {
  Writer w;
  w.bytes(kCheckpointMagic, 4);
  w.u16(kCheckpointVersion);
  std::ostringstream meta;
  meta << "depth=" << net.config().depth << "\nbase_width=" << net.config().base_width << "\n";
  const std::string m = meta.str();
  w.u32(static_cast<std::uint32_t>(m.size()));
  w.bytes(m.data(), m.size());
  for (const auto& p : net.params().params()) {
    w.u16(static_cast<std::uint16_t>(p.name.size()));
    w.bytes(p.name.data(), p.name.size());
    w.u8(static_cast<std::uint8_t>(p.shape.size()));
    for (int d : p.shape) w.u32(static_cast<std::uint32_t>(d));
    for (T v : p.value) w.f32(static_cast<float>(v));
  }
  return w.take();
}

inline NetworkConfig parse_checkpoint_config(const std::string& meta) {
  std::map<std::string, std::string> kv;
  std::istringstream in(meta);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  NetworkConfig cfg;
  try {
    cfg.depth = std::stoi(kv.at("depth"));
    cfg.base_width = std::stoi(kv.at("base_width"));
  } catch (const std::exception&) {
    fail(ErrorCode::bad_magic, "checkpoint: malformed metadata block");
  }
  if (cfg.depth < 1 || cfg.depth > 8 || cfg.base_width < 1 || cfg.base_width > 4096)
    fail(ErrorCode::out_of_range, "checkpoint: config out of range");
  return cfg;
}

/// Rebuilds a network from checkpoint bytes. Every parameter and buffer of
/// the configured architecture must be present exactly once with a matching
/// shape.
template <class T>
std::unique_ptr<Network<T>> decode_checkpoint(const Bytes& data) {
  Reader r(data);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kCheckpointMagic, 4) != 0) fail(ErrorCode::bad_magic, "checkpoint: bad magic");
  if (r.u16() != kCheckpointVersion) fail(ErrorCode::bad_version, "checkpoint: unsupported version");
  const std::uint32_t meta_len = r.u32();
  if (meta_len > r.remaining()) fail(ErrorCode::truncated, "checkpoint: truncated metadata");
  std::string meta(meta_len, '\0');
  r.bytes(meta.data(), meta_len);
  auto net = std::make_unique<Network<T>>(parse_checkpoint_config(meta));

  std::map<std::string, bool> seen;
  while (!r.at_end()) {
    const std::uint16_t len = r.u16();
    std::string name(len, '\0');
    r.bytes(name.data(), len);
    nn::Param<T>* p = net->params().find(name);
    if (!p) fail(ErrorCode::out_of_range, "checkpoint: unknown parameter " + name);
    if (seen[name]) fail(ErrorCode::out_of_range, "checkpoint: duplicate parameter " + name);
    seen[name] = true;
    const std::uint8_t rank = r.u8();
    std::vector<int> shape(rank);
    for (int& d : shape) d = static_cast<int>(r.u32());
    if (shape != p->shape) fail(ErrorCode::out_of_range, "checkpoint: shape mismatch for " + name);
    for (T& v : p->value) {
      const float f = r.f32();
      if (!std::isfinite(f)) fail(ErrorCode::out_of_range, "checkpoint: non-finite value in " + name);
      v = static_cast<T>(f);
    }
  }
  if (seen.size() != net->params().params().size())
    fail(ErrorCode::truncated, "checkpoint: missing parameters");
  return net;
}

template <class T>
void save_checkpoint(const std::string& path, const Network<T>& net) {
  write_file(path, encode_checkpoint(net));
}

template <class T = float>
std::unique_ptr<Network<T>> load_checkpoint(const std::string& path) {
  return decode_checkpoint<T>(read_file(path));
}

}  // namespace svbr::io
