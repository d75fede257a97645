#pragma once

#include <cmath>
#include <string>

#include "svbr/io/binary.hpp"
#include "svbr/kernels.hpp"

namespace svbr::io {

// BMAP layout: "BMAP", u8 version (1), u32 height, u32 width, then
// height·width little-endian float32 radii, row-major.
inline constexpr char kBmapMagic[4] = {'B', 'M', 'A', 'P'};
inline constexpr std::uint8_t kBmapVersion = 1;

inline Bytes encode_field(const BlurField& field) {
  Writer w;
  w.bytes(kBmapMagic, 4);
  w.u8(kBmapVersion);
  w.u32(static_cast<std::uint32_t>(field.height()));
  w.u32(static_cast<std::uint32_t>(field.width()));
  for (double r : field.radii.data) {
    const float f = static_cast<float>(r);
    if (!std::isfinite(f) || f < 0.0f || f > static_cast<float>(kMaxRadius))
      fail(ErrorCode::out_of_range, "BMAP: radius outside [0, 6]");
    w.f32(f);
  }
  return w.take();
}

inline BlurField decode_field(const Bytes& data) {
  Reader r(data);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, kBmapMagic, 4) != 0) fail(ErrorCode::bad_magic, "BMAP: bad magic");
  if (r.u8() != kBmapVersion) fail(ErrorCode::bad_version, "BMAP: unsupported version");
  const std::uint32_t h = r.u32(), w = r.u32();
  if (h == 0 || w == 0) fail(ErrorCode::out_of_range, "BMAP: empty grid");
  if (r.remaining() / 4 < static_cast<std::uint64_t>(h) * w)
    fail(ErrorCode::truncated, "BMAP: payload shorter than height*width");
  if (r.remaining() != static_cast<std::uint64_t>(h) * w * 4)
    fail(ErrorCode::out_of_range, "BMAP: trailing bytes after payload");
  BlurField field(static_cast<int>(h), static_cast<int>(w));
  for (double& v : field.radii.data) {
    const float f = r.f32();
    if (!std::isfinite(f) || f < 0.0f || f > static_cast<float>(kMaxRadius))
      fail(ErrorCode::out_of_range, "BMAP: radius outside [0, 6]");
    v = f;
  }
  return field;
}

inline void write_field(const std::string& path, const BlurField& field) {
  write_file(path, encode_field(field));
}

inline BlurField read_field(const std::string& path) { return decode_field(read_file(path)); }

}  // namespace svbr::io
