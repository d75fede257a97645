#pragma once

#include "svbr/synthesis.hpp"

namespace svbr {

inline constexpr int kDefaultRlIterations = 30;

/// Richardson-Lucy deconvolution with replicate boundaries, started from the
/// observation: u ← u · (K ⊛ (d / (K ⊛ u))). The kernel is symmetric so its
/// adjoint is itself. Clamped to [0,1] only after the last iteration.
inline ImageGrid richardson_lucy(const ImageGrid& image, const DiskKernel& kernel, int iterations) {
  if (iterations < 1) fail(ErrorCode::domain, "richardson_lucy: iterations must be >= 1");
  constexpr double kFloor = 1e-12;
  ImageGrid u = image;
  for (int it = 0; it < iterations; ++it) {
    ImageGrid ratio = convolve(u, kernel);
    for (std::size_t i = 0; i < ratio.size(); ++i)
      ratio.values()[i] = image.values()[i] / std::max(ratio.values()[i], kFloor);
    const ImageGrid correction = convolve(ratio, kernel);
    for (std::size_t i = 0; i < u.size(); ++i) u.values()[i] *= correction.values()[i];
  }
  u.clamp(0.0, 1.0);
  return u;
}

/// Soft per-scale weights: each hard mask from decompose_field is box
/// filtered with radius `feather` (a linear ramp across straight
/// boundaries), then the weights are renormalized to sum to one per pixel.
inline std::vector<std::pair<int, Grid<double>>> feathered_masks(const BlurField& field, int feather = 2) {
  std::vector<std::pair<int, Grid<double>>> out;
  const int h = field.height(), w = field.width();
  for (const ScaleMask& sm : decompose_field(field)) {
    Grid<double> tmp(h, w), soft(h, w);
    const double norm = 2.0 * feather + 1.0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int d = -feather; d <= feather; ++d) s += sm.mask(y, clamp_index(x + d, w));
        tmp(y, x) = s / norm;
      }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        for (int d = -feather; d <= feather; ++d) s += tmp(clamp_index(y + d, h), x);
        soft(y, x) = s / norm;
      }
    out.emplace_back(sm.scale_index, std::move(soft));
  }
  for (std::size_t i = 0; i < field.radii.size(); ++i) {
    double s = 0.0;
    for (auto& [k, m] : out) s += m.data[i];
    for (auto& [k, m] : out) m.data[i] /= s;
  }
  return out;
}

/// Runs Richardson-Lucy once per scale present in the field and blends the
/// results with feathered masks; identity-scale regions take the input.
inline ImageGrid sv_deconvolve_baseline(const ImageGrid& image, const BlurField& field,
                                        int iterations = kDefaultRlIterations) {
  require_same_plane(image.height(), image.width(), field.height(), field.width(),
                     "sv_deconvolve_baseline");
  const auto masks = feathered_masks(field);
  if (masks.size() == 1)
    return masks[0].first < 0 ? image : richardson_lucy(image, kernel_for_index(masks[0].first), iterations);
  ImageGrid out(image.height(), image.width(), image.channels());
  for (const auto& [k, weight] : masks) {
    const ImageGrid restored = k < 0 ? image : richardson_lucy(image, kernel_for_index(k), iterations);
    for (int c = 0; c < image.channels(); ++c) {
      auto dst = out.plane(c);
      const auto src = restored.plane(c);
      for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += weight.data[i] * src[i];
    }
  }
  out.clamp(0.0, 1.0);
  return out;
}

}  // namespace svbr
