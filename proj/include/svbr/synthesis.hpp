#pragma once

#include <map>
#include <random>
#include <vector>

#include "svbr/image.hpp"
#include "svbr/kernels.hpp"

namespace svbr {

enum class NoiseKind { none, gaussian };

struct NoiseConfig {
  NoiseKind kind = NoiseKind::none;
  double sigma = 0.0;
  std::uint64_t seed = 0;
};

/// One quantized scale present in a field and the pixels that use it.
struct ScaleMask {
  int scale_index;  // -1: identity kernel
  Mask mask;
};

/// Partitions the field by quantized scale, ascending by index. Only scales
/// that occur appear; the masks are disjoint and cover every pixel.
inline std::vector<ScaleMask> decompose_field(const BlurField& field) {
  const BlurScaleSet set = make_scale_set();
  std::map<int, Mask> by_scale;
  for (int y = 0; y < field.height(); ++y)
    for (int x = 0; x < field.width(); ++x) {
      const int k = quantize_radius(field(y, x), set).index;
      auto it = by_scale.find(k);
      if (it == by_scale.end())
        it = by_scale.emplace(k, Mask(field.height(), field.width(), 0)).first;
      it->second(y, x) = 1;
    }
  std::vector<ScaleMask> out;
  out.reserve(by_scale.size());
  for (auto& [k, m] : by_scale) out.push_back({k, std::move(m)});
  return out;
}

namespace detail {

// Kernel response at one pixel with edge replication. Summation runs over
// kernel rows then columns; both convolution paths share this order.
inline double apply_kernel_at(std::span<const double> plane, int h, int w,
                              const DiskKernel& k, int y, int x) {
  const int r = k.half();
  double acc = 0.0;
  for (int dy = -r; dy <= r; ++dy) {
    const std::size_t row = static_cast<std::size_t>(clamp_index(y + dy, h)) * w;
    const double* wr = k.weights.data() + static_cast<std::size_t>(dy + r) * k.support;
    for (int dx = -r; dx <= r; ++dx) acc += wr[dx + r] * plane[row + clamp_index(x + dx, w)];
  }
  return acc;
}

inline void add_noise_and_clamp(ImageGrid& img, const NoiseConfig& noise) {
  if (noise.kind == NoiseKind::gaussian && noise.sigma > 0.0) {
    std::mt19937_64 rng(noise.seed);
    std::normal_distribution<double> n(0.0, noise.sigma);
    for (double& v : img.values()) v += n(rng);
  }
  img.clamp(0.0, 1.0);
}

}  // namespace detail

/// Dense convolution of every channel with one kernel, replicate boundary.
/// Kernels are symmetric, so correlation and convolution coincide.
inline ImageGrid convolve(const ImageGrid& image, const DiskKernel& kernel) {
  ImageGrid out(image.height(), image.width(), image.channels());
  const int h = image.height(), w = image.width();
  for (int c = 0; c < image.channels(); ++c) {
    const auto src = image.plane(c);
    auto dst = out.plane(c);
    if (kernel.support == 1) {
      std::copy(src.begin(), src.end(), dst.begin());
      continue;
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        dst[static_cast<std::size_t>(y) * w + x] = detail::apply_kernel_at(src, h, w, kernel, y, x);
  }
  return out;
}

/// Spatially-varying blur: one dense convolution per scale present in the
/// field, composited by that scale's mask (the blur value at the destination
/// pixel selects the kernel). Noise is added afterwards and the result is
/// clamped to [0,1].
inline ImageGrid sv_convolve(const ImageGrid& image, const BlurField& field,
                             const NoiseConfig& noise = {}) {
  require_same_plane(image.height(), image.width(), field.height(), field.width(), "sv_convolve");
  ImageGrid out(image.height(), image.width(), image.channels());
  for (const ScaleMask& sm : decompose_field(field)) {
    const ImageGrid blurred = convolve(image, kernel_for_index(sm.scale_index));
    for (int c = 0; c < image.channels(); ++c) {
      auto dst = out.plane(c);
      const auto src = blurred.plane(c);
      for (std::size_t i = 0; i < dst.size(); ++i)
        if (sm.mask.data[i]) dst[i] = src[i];
    }
  }
  detail::add_noise_and_clamp(out, noise);
  return out;
}

/// Reference path: builds and applies the quantized kernel pixel by pixel.
inline ImageGrid sv_convolve_naive(const ImageGrid& image, const BlurField& field) {
  require_same_plane(image.height(), image.width(), field.height(), field.width(),
                     "sv_convolve_naive");
  const BlurScaleSet set = make_scale_set();
  const int h = image.height(), w = image.width();
  ImageGrid out(h, w, image.channels());
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const QuantizedRadius q = quantize_radius(field(y, x), set);
      const DiskKernel& k = kernel_for_index(q.index);
      for (int c = 0; c < image.channels(); ++c)
        out.at(c, y, x) = detail::apply_kernel_at(image.plane(c), h, w, k, y, x);
    }
  out.clamp(0.0, 1.0);
  return out;
}

}  // namespace svbr
