#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <sstream>
#include <string>

#include "svbr/image.hpp"
#include "svbr/io/binary.hpp"

namespace svbr::io {

// Raster I/O. Extension selects the format:
//   .pfm         32-bit float (lossless for the training path)
//   .png         8- or 16-bit, via libpng
//   .ppm / .pgm  binary Netpbm, 8- or 16-bit
// Readers normalize integer samples to [0,1].

inline std::string lower_extension(const std::string& path) {
  std::string ext = std::filesystem::path(path).extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext;
}

namespace detail {

inline std::string next_token(const Bytes& d, std::size_t& pos) {
  while (pos < d.size()) {
    if (d[pos] == '#') {
      while (pos < d.size() && d[pos] != '\n') ++pos;
    } else if (std::isspace(d[pos])) {
      ++pos;
    } else {
      break;
    }
  }
  std::string tok;
  while (pos < d.size() && !std::isspace(d[pos])) tok.push_back(static_cast<char>(d[pos++]));
  if (tok.empty()) fail(ErrorCode::truncated, "raster: truncated header");
  return tok;
}

inline int parse_int(const std::string& s) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::bad_magic, "raster: malformed header field '" + s + "'");
  }
}

inline ImageGrid decode_pfm(const Bytes& d) {
  std::size_t pos = 0;
  const std::string magic = next_token(d, pos);
  int channels;
  if (magic == "PF") channels = 3;
  else if (magic == "Pf") channels = 1;
  else fail(ErrorCode::bad_magic, "PFM: bad magic");
  const int w = parse_int(next_token(d, pos));
  const int h = parse_int(next_token(d, pos));
  const std::string scale_tok = next_token(d, pos);
  double scale;
  try {
    scale = std::stod(scale_tok);
  } catch (const std::exception&) {
    fail(ErrorCode::bad_magic, "PFM: malformed scale");
  }
  ++pos;  // single whitespace before the payload
  if (w <= 0 || h <= 0) fail(ErrorCode::out_of_range, "PFM: bad dimensions");
  const bool little = scale < 0;
  const std::size_t count = static_cast<std::size_t>(w) * h * channels;
  if (d.size() < pos + 4 * count) fail(ErrorCode::truncated, "PFM: truncated payload");
  ImageGrid img(h, w, channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        const std::size_t at = pos + 4 * ((static_cast<std::size_t>(y) * w + x) * channels + c);
        std::uint32_t bits = 0;
        for (int i = 0; i < 4; ++i) {
          const int shift = little ? 8 * i : 8 * (3 - i);
          bits |= static_cast<std::uint32_t>(d[at + static_cast<std::size_t>(i)]) << shift;
        }
        // PFM stores rows bottom to top.
        img.at(c, h - 1 - y, x) = static_cast<double>(std::bit_cast<float>(bits));
      }
  return img;
}

inline Bytes encode_pfm(const ImageGrid& img) {
  if (img.channels() != 1 && img.channels() != 3)
    fail(ErrorCode::unsupported, "PFM: need 1 or 3 channels");
  std::ostringstream hdr;
  hdr << (img.channels() == 3 ? "PF" : "Pf") << "\n" << img.width() << " " << img.height() << "\n-1.0\n";
  Writer w;
  const std::string h = hdr.str();
  w.bytes(h.data(), h.size());
  for (int y = img.height() - 1; y >= 0; --y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) w.f32(static_cast<float>(img.at(c, y, x)));
  return w.take();
}

inline ImageGrid decode_pnm(const Bytes& d) {
  std::size_t pos = 0;
  const std::string magic = next_token(d, pos);
  int channels;
  if (magic == "P6") channels = 3;
  else if (magic == "P5") channels = 1;
  else fail(ErrorCode::bad_magic, "PNM: only binary P5/P6 are supported");
  const int w = parse_int(next_token(d, pos));
  const int h = parse_int(next_token(d, pos));
  const int maxval = parse_int(next_token(d, pos));
  ++pos;
  if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 65535)
    fail(ErrorCode::out_of_range, "PNM: bad header values");
  const int bps = maxval > 255 ? 2 : 1;
  const std::size_t count = static_cast<std::size_t>(w) * h * channels;
  if (d.size() < pos + bps * count) fail(ErrorCode::truncated, "PNM: truncated payload");
  ImageGrid img(h, w, channels);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < channels; ++c) {
        const std::size_t at = pos + bps * ((static_cast<std::size_t>(y) * w + x) * channels + c);
        const unsigned v = bps == 2 ? (static_cast<unsigned>(d[at]) << 8) | d[at + 1] : d[at];
        img.at(c, y, x) = static_cast<double>(v) / maxval;
      }
  return img;
}

inline Bytes encode_pnm(const ImageGrid& img, int bits) {
  if (img.channels() != 1 && img.channels() != 3)
    fail(ErrorCode::unsupported, "PNM: need 1 or 3 channels");
  const int maxval = bits == 16 ? 65535 : 255;
  std::ostringstream hdr;
  hdr << (img.channels() == 3 ? "P6" : "P5") << "\n" << img.width() << " " << img.height() << "\n" << maxval << "\n";
  Writer w;
  const std::string h = hdr.str();
  w.bytes(h.data(), h.size());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        const auto v = static_cast<unsigned>(std::lround(std::clamp(img.at(c, y, x), 0.0, 1.0) * maxval));
        if (bits == 16) w.u8(static_cast<std::uint8_t>(v >> 8));
        w.u8(static_cast<std::uint8_t>(v & 0xff));
      }
  return w.take();
}

struct PngReadState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadState() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct PngWriteState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteState() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

struct PngSource {
  const Bytes* data;
  std::size_t pos;
};

[[noreturn]] inline void png_error_handler(png_structp png, png_const_charp msg) {
  (void)png;
  throw Error(ErrorCode::bad_magic, std::string("PNG: ") + msg);
}
inline void png_warning_handler(png_structp, png_const_charp) {}

inline ImageGrid decode_png(const Bytes& d) {
  if (d.size() < 8 || png_sig_cmp(d.data(), 0, 8) != 0) fail(ErrorCode::bad_magic, "PNG: bad signature");
  PngReadState st;
  st.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
  if (!st.png) fail(ErrorCode::io, "PNG: cannot allocate reader");
  st.info = png_create_info_struct(st.png);
  PngSource src{&d, 0};
  png_set_read_fn(st.png, &src, [](png_structp p, png_bytep out, png_size_t n) {
    auto* s = static_cast<PngSource*>(png_get_io_ptr(p));
    if (s->pos + n > s->data->size()) throw Error(ErrorCode::truncated, "PNG: truncated data");
    std::memcpy(out, s->data->data() + s->pos, n);
    s->pos += n;
  });
  png_read_info(st.png, st.info);
  png_set_expand(st.png);
  png_set_strip_alpha(st.png);
  if constexpr (std::endian::native == std::endian::little) png_set_swap(st.png);
  png_read_update_info(st.png, st.info);
  const int w = static_cast<int>(png_get_image_width(st.png, st.info));
  const int h = static_cast<int>(png_get_image_height(st.png, st.info));
  const int depth = png_get_bit_depth(st.png, st.info);
  const int channels = png_get_channels(st.png, st.info);
  const std::size_t rowbytes = png_get_rowbytes(st.png, st.info);
  std::vector<unsigned char> buf(rowbytes * static_cast<std::size_t>(h));
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = buf.data() + rowbytes * y;
  png_read_image(st.png, rows.data());
  const int out_c = channels >= 3 ? 3 : 1;
  ImageGrid img(h, w, out_c);
  const double maxval = depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < out_c; ++c) {
        const std::size_t idx = static_cast<std::size_t>(x) * channels + c;
        double v;
        if (depth == 16) {
          std::uint16_t s;
          std::memcpy(&s, rows[static_cast<std::size_t>(y)] + 2 * idx, 2);
          v = s;
        } else {
          v = rows[static_cast<std::size_t>(y)][idx];
        }
        img.at(c, y, x) = v / maxval;
      }
  return img;
}

inline Bytes encode_png(const ImageGrid& img, int bits) {
  if (img.channels() != 1 && img.channels() != 3)
    fail(ErrorCode::unsupported, "PNG: need 1 or 3 channels");
  PngWriteState st;
  st.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_error_handler, png_warning_handler);
  if (!st.png) fail(ErrorCode::io, "PNG: cannot allocate writer");
  st.info = png_create_info_struct(st.png);
  Bytes out;
  png_set_write_fn(
      st.png, &out,
      [](png_structp p, png_bytep data, png_size_t n) {
        auto* o = static_cast<Bytes*>(png_get_io_ptr(p));
        o->insert(o->end(), data, data + n);
      },
      [](png_structp) {});
  const int depth = bits == 16 ? 16 : 8;
  png_set_IHDR(st.png, st.info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()),
               depth, img.channels() == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(st.png, st.info);
  const int bpc = depth / 8;
  const double maxval = depth == 16 ? 65535.0 : 255.0;
  std::vector<unsigned char> row(static_cast<std::size_t>(img.width()) * img.channels() * bpc);
  for (int y = 0; y < img.height(); ++y) {
    std::size_t k = 0;
    for (int x = 0; x < img.width(); ++x)
      for (int c = 0; c < img.channels(); ++c) {
        const auto v = static_cast<unsigned>(std::lround(std::clamp(img.at(c, y, x), 0.0, 1.0) * maxval));
        if (bpc == 2) row[k++] = static_cast<unsigned char>(v >> 8);  // PNG is big-endian
        row[k++] = static_cast<unsigned char>(v & 0xff);
      }
    png_write_row(st.png, row.data());
  }
  png_write_end(st.png, nullptr);
  return out;
}

}  // namespace detail

inline ImageGrid decode_image(const Bytes& data, const std::string& ext) {
  if (ext == ".pfm") return detail::decode_pfm(data);
  if (ext == ".png") return detail::decode_png(data);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return detail::decode_pnm(data);
  fail(ErrorCode::unsupported, "unsupported image extension '" + ext + "'");
}

inline ImageGrid read_image(const std::string& path) {
  return decode_image(read_file(path), lower_extension(path));
}

inline Bytes encode_image(const ImageGrid& img, const std::string& ext, int bits = 8) {
  if (ext == ".pfm") return detail::encode_pfm(img);
  if (ext == ".png") return detail::encode_png(img, bits);
  if (ext == ".ppm" || ext == ".pgm" || ext == ".pnm") return detail::encode_pnm(img, bits);
  fail(ErrorCode::unsupported, "unsupported image extension '" + ext + "'");
}

/// `bits` applies to integer formats (8 or 16).
inline void write_image(const std::string& path, const ImageGrid& img, int bits = 8) {
  write_file(path, encode_image(img, lower_extension(path), bits));
}

inline bool is_image_extension(const std::string& ext) {
  return ext == ".pfm" || ext == ".png" || ext == ".ppm" || ext == ".pgm" || ext == ".pnm";
}

}  // namespace svbr::io
