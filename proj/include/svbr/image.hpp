#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "svbr/error.hpp"

namespace svbr {

/// Planar H×W×C image of doubles. Values are expected in [0,1] once an image
/// has been normalized; intermediate results may leave that range.
class ImageGrid {
 public:
  ImageGrid() = default;
  ImageGrid(int height, int width, int channels, double fill = 0.0)
      : height_(height), width_(width), channels_(channels) {
    if (height <= 0 || width <= 0 || channels <= 0)
      fail(ErrorCode::domain, "ImageGrid: dimensions must be positive");
    values_.assign(static_cast<std::size_t>(height) * width * channels, fill);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  int channels() const noexcept { return channels_; }
  std::size_t plane_size() const noexcept {
    return static_cast<std::size_t>(height_) * width_;
  }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double& at(int c, int y, int x) noexcept {
    return values_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  double at(int c, int y, int x) const noexcept {
    return values_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  std::span<double> plane(int c) noexcept {
    return {values_.data() + c * plane_size(), plane_size()};
  }
  std::span<const double> plane(int c) const noexcept {
    return {values_.data() + c * plane_size(), plane_size()};
  }

  std::vector<double>& values() noexcept { return values_; }
  const std::vector<double>& values() const noexcept { return values_; }

  bool same_shape(const ImageGrid& o) const noexcept {
    return height_ == o.height_ && width_ == o.width_ && channels_ == o.channels_;
  }

  void clamp(double lo = 0.0, double hi = 1.0) {
    for (double& v : values_) v = std::clamp(v, lo, hi);
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(),
                       [](double v) { return std::isfinite(v); });
  }

  friend bool operator==(const ImageGrid&, const ImageGrid&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  std::vector<double> values_;
};

/// Single-channel grid (masks, intermediate scalar fields).
template <class T>
struct Grid {
  int height = 0;
  int width = 0;
  std::vector<T> data;

  Grid() = default;
  Grid(int h, int w, T fill = T{}) : height(h), width(w) {
    data.assign(static_cast<std::size_t>(h) * w, fill);
  }
  T& operator()(int y, int x) noexcept {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  const T& operator()(int y, int x) const noexcept {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  std::size_t size() const noexcept { return data.size(); }
  friend bool operator==(const Grid&, const Grid&) = default;
};

using Mask = Grid<unsigned char>;

inline void require_same_plane(int h0, int w0, int h1, int w1, const char* who) {
  if (h0 != h1 || w0 != w1)
    fail(ErrorCode::shape_mismatch,
         std::string(who) + ": shape mismatch (" + std::to_string(h0) + "x" +
             std::to_string(w0) + " vs " + std::to_string(h1) + "x" +
             std::to_string(w1) + ")");
}

/// Rec.601 luma for 3-channel images; the single plane otherwise.
inline Grid<double> luminance(const ImageGrid& img) {
  Grid<double> out(img.height(), img.width());
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x)
      out(y, x) = img.channels() >= 3
                      ? 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) +
                            0.114 * img.at(2, y, x)
                      : img.at(0, y, x);
  return out;
}

/// Copies a single-channel image into three identical planes.
inline ImageGrid to_rgb(const ImageGrid& img) {
  if (img.channels() == 3) return img;
  ImageGrid out(img.height(), img.width(), 3);
  for (int c = 0; c < 3; ++c)
    std::copy(img.plane(0).begin(), img.plane(0).end(), out.plane(c).begin());
  return out;
}

inline int clamp_index(int i, int n) noexcept {
  return i < 0 ? 0 : (i >= n ? n - 1 : i);
}

}  // namespace svbr
