#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "svbr/error.hpp"
#include "svbr/image.hpp"

namespace svbr {

inline constexpr int kNumScales = 23;
inline constexpr double kMinScale = 0.5;
inline constexpr double kScaleStep = 0.25;
inline constexpr double kMaxRadius = 6.0;
inline constexpr int kDefaultSupersample = 64;

/// Normalized disk point-spread function. `support` is odd and the kernel
/// center sits at (support/2, support/2).
struct DiskKernel {
  double radius = 0.0;
  int support = 1;
  std::vector<double> weights{1.0};

  int half() const noexcept { return support / 2; }
  double at(int dy, int dx) const noexcept {
    return weights[static_cast<std::size_t>(dy + half()) * support + dx + half()];
  }
};

/// The 23 disk radii 0.5, 0.75, ..., 6.0.
struct BlurScaleSet {
  std::array<double, kNumScales> scales{};

  double operator[](int i) const noexcept { return scales[static_cast<std::size_t>(i)]; }
  static constexpr int size() noexcept { return kNumScales; }
  bool contains(double r) const noexcept {
    return std::find(scales.begin(), scales.end(), r) != scales.end();
  }
};

inline BlurScaleSet make_scale_set() {
  BlurScaleSet s;
  for (int i = 0; i < kNumScales; ++i)
    s.scales[static_cast<std::size_t>(i)] = kMinScale + kScaleStep * i;
  return s;
}

/// Per-pixel disk radius over an H×W grid.
struct BlurField {
  Grid<double> radii;

  BlurField() = default;
  BlurField(int height, int width, double fill = 0.0) : radii(height, width, fill) {
    if (height <= 0 || width <= 0)
      fail(ErrorCode::domain, "BlurField: dimensions must be positive");
  }
  explicit BlurField(Grid<double> g) : radii(std::move(g)) {}

  int height() const noexcept { return radii.height; }
  int width() const noexcept { return radii.width; }
  double& operator()(int y, int x) noexcept { return radii(y, x); }
  double operator()(int y, int x) const noexcept { return radii(y, x); }

  bool in_range() const {
    return std::all_of(radii.data.begin(), radii.data.end(), [](double r) {
      return std::isfinite(r) && r >= 0.0 && r <= kMaxRadius;
    });
  }
  friend bool operator==(const BlurField&, const BlurField&) = default;
};

/// Builds the disk kernel for `radius`. Each pixel is split into
/// supersample×supersample cells; a cell contributes its anti-aliased
/// coverage clamp((r - d)·S + 1/2, 0, 1), d being the cell center's distance
/// from the kernel center. Weights are normalized to sum to one.
inline DiskKernel make_disk_kernel(double radius, int supersample = kDefaultSupersample) {
  if (!(radius >= 0.0) || radius > kMaxRadius)
    fail(ErrorCode::domain, "make_disk_kernel: radius must lie in [0, 6]");
  if (supersample < 1) fail(ErrorCode::domain, "make_disk_kernel: supersample must be >= 1");

  DiskKernel k;
  k.radius = radius;
  if (radius == 0.0) return k;

  const int half = static_cast<int>(std::ceil(radius));
  k.support = 2 * half + 1;
  k.weights.assign(static_cast<std::size_t>(k.support) * k.support, 0.0);

  const double cell = 1.0 / supersample;
  std::vector<double> offsets(static_cast<std::size_t>(supersample));
  for (int s = 0; s < supersample; ++s) offsets[static_cast<std::size_t>(s)] = (s + 0.5) * cell - 0.5;

  double total = 0.0;
  for (int py = -half; py <= half; ++py) {
    for (int px = -half; px <= half; ++px) {
      double covered = 0.0;
      for (double oy : offsets) {
        const double y = py + oy;
        for (double ox : offsets) {
          const double x = px + ox;
          const double d = std::sqrt(x * x + y * y);
          covered += std::clamp((radius - d) * supersample + 0.5, 0.0, 1.0);
        }
      }
      k.weights[static_cast<std::size_t>(py + half) * k.support + px + half] = covered;
      total += covered;
    }
  }
  for (double& w : k.weights) w /= total;
  return k;
}

/// The 23 scale kernels at the default supersampling, built once.
inline const std::vector<DiskKernel>& scale_kernels() {
  static const std::vector<DiskKernel> bank = [] {
    const BlurScaleSet set = make_scale_set();
    std::vector<DiskKernel> ks;
    ks.reserve(kNumScales);
    for (int i = 0; i < kNumScales; ++i) ks.push_back(make_disk_kernel(set[i]));
    return ks;
  }();
  return bank;
}

/// Kernel for a quantized scale index; -1 is the identity.
inline const DiskKernel& kernel_for_index(int index) {
  static const DiskKernel identity{};
  return index < 0 ? identity : scale_kernels()[static_cast<std::size_t>(index)];
}

struct QuantizedRadius {
  int index;     // -1 selects the identity kernel
  double value;  // 0 for the identity kernel
  friend bool operator==(const QuantizedRadius&, const QuantizedRadius&) = default;
};

/// Nearest member of `set`; ties go to the smaller radius, anything below
/// 0.375 maps to the identity kernel and anything above 6 clamps to 6.
inline QuantizedRadius quantize_radius(double radius, const BlurScaleSet& set) {
  if (!(radius >= 0.0)) fail(ErrorCode::domain, "quantize_radius: radius must be >= 0");
  const double identity_cut = set[0] - kScaleStep / 2;
  if (radius < identity_cut) return {-1, 0.0};
  const double pos = (radius - set[0]) / kScaleStep;
  int idx = static_cast<int>(std::ceil(pos - 0.5));
  idx = std::clamp(idx, 0, kNumScales - 1);
  return {idx, set[idx]};
}

enum class PatternKind { linear_ramp, radial, step_layers, smooth_layers };

inline const char* to_string(PatternKind k) {
  switch (k) {
    case PatternKind::linear_ramp: return "linear_ramp";
    case PatternKind::radial: return "radial";
    case PatternKind::step_layers: return "step_layers";
    case PatternKind::smooth_layers: return "smooth_layers";
  }
  return "?";
}

/// Parametric description of one spatially-varying blur pattern.
///
/// Ramps and radial patterns interpolate scale indices from `start_index`
/// to `end_index`. Layered patterns split the image into `layer_count` bands
/// perpendicular to `angle_deg`; band scale indices come from `layer_indices`
/// when given, otherwise they are drawn from `seed`.
struct FieldPatternSpec {
  PatternKind kind = PatternKind::linear_ramp;
  double angle_deg = 0.0;  // direction of increasing t; 90 points down the rows
  int layer_count = 1;
  int start_index = 0;
  int end_index = kNumScales - 1;
  double center_x = 0.5;  // radial center, fraction of width
  double center_y = 0.5;
  std::vector<int> layer_indices;
  std::uint64_t seed = 0;

  friend bool operator==(const FieldPatternSpec&, const FieldPatternSpec&) = default;
};

namespace detail {

// Normalized coordinate in [0,1] along the pattern direction.
inline Grid<double> directional_coordinate(double angle_deg, int h, int w) {
  const double a = angle_deg * std::numbers::pi / 180.0;
  double dx = std::cos(a), dy = std::sin(a);
  if (std::abs(dx) < 1e-12) dx = 0.0;
  if (std::abs(dy) < 1e-12) dy = 0.0;
  double lo = 1e300, hi = -1e300;
  for (int cy : {0, h - 1})
    for (int cx : {0, w - 1}) {
      const double p = cx * dx + cy * dy;
      lo = std::min(lo, p);
      hi = std::max(hi, p);
    }
  Grid<double> t(h, w);
  const double span = hi - lo;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) t(y, x) = span > 0 ? (x * dx + y * dy - lo) / span : 0.0;
  return t;
}

inline int round_index(double v) {
  return std::clamp(static_cast<int>(std::floor(v + 0.5)), 0, kNumScales - 1);
}

inline std::vector<int> layer_indices_for(const FieldPatternSpec& spec) {
  if (!spec.layer_indices.empty()) return spec.layer_indices;
  if (spec.layer_count < 1 || spec.layer_count > 8)
    fail(ErrorCode::domain, "FieldPatternSpec: layer_count must be in [1, 8]");
  std::mt19937_64 rng(spec.seed);
  std::vector<int> out;
  // Distinct consecutive layers so every band boundary is a depth change.
  while (static_cast<int>(out.size()) < spec.layer_count) {
    const int idx = static_cast<int>(rng() % kNumScales);
    if (!out.empty() && out.back() == idx) continue;
    out.push_back(idx);
  }
  return out;
}

}  // namespace detail

inline BlurField generate_blur_field(const FieldPatternSpec& spec, int height, int width) {
  if (height < 1 || width < 1) fail(ErrorCode::domain, "generate_blur_field: empty grid");
  auto check = [](int i) {
    if (i < 0 || i >= kNumScales)
      fail(ErrorCode::domain, "generate_blur_field: scale index out of range");
  };
  check(spec.start_index);
  check(spec.end_index);

  const BlurScaleSet set = make_scale_set();
  BlurField field(height, width);

  switch (spec.kind) {
    case PatternKind::linear_ramp: {
      const Grid<double> t = detail::directional_coordinate(spec.angle_deg, height, width);
      const double span = spec.end_index - spec.start_index;
      for (std::size_t i = 0; i < t.size(); ++i)
        field.radii.data[i] = set[detail::round_index(spec.start_index + t.data[i] * span)];
      break;
    }
    case PatternKind::radial: {
      const double cx = spec.center_x * (width - 1), cy = spec.center_y * (height - 1);
      double dmax = 0.0;
      for (int y : {0, height - 1})
        for (int x : {0, width - 1}) dmax = std::max(dmax, std::hypot(x - cx, y - cy));
      const double span = spec.end_index - spec.start_index;
      for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
          const double t = dmax > 0 ? std::hypot(x - cx, y - cy) / dmax : 0.0;
          field(y, x) = set[detail::round_index(spec.start_index + t * span)];
        }
      break;
    }
    case PatternKind::step_layers:
    case PatternKind::smooth_layers: {
      const std::vector<int> layers = detail::layer_indices_for(spec);
      for (int i : layers) check(i);
      const int n = static_cast<int>(layers.size());
      const Grid<double> t = detail::directional_coordinate(spec.angle_deg, height, width);
      for (std::size_t i = 0; i < t.size(); ++i) {
        const double ti = t.data[i];
        int idx;
        if (spec.kind == PatternKind::step_layers || n == 1) {
          idx = layers[static_cast<std::size_t>(std::min(n - 1, static_cast<int>(ti * n)))];
        } else {
          // Piecewise-linear through the band centers, flat beyond the ends.
          const double u = std::clamp(ti * n - 0.5, 0.0, static_cast<double>(n - 1));
          const int k = std::min(n - 2, static_cast<int>(u));
          const double f = u - k;
          idx = detail::round_index(layers[static_cast<std::size_t>(k)] * (1.0 - f) +
                                    layers[static_cast<std::size_t>(k + 1)] * f);
        }
        field.radii.data[i] = set[idx];
      }
      break;
    }
    default:
      fail(ErrorCode::unsupported, "generate_blur_field: unsupported pattern kind");
  }
  return field;
}

/// The fixed bank of 39 patterns:
///   0-7   linear ramps at 0°, 45°, ..., 315° (index 0 → 22);
///   8-10  radial, sharp at the center (centered, then two off-center);
///   11-26 step layers, 2-5 layers × orientations {0°, 45°, 90°, 135°};
///   27-38 smooth layers, 2-4 layers × the same orientations.
/// Layer scales are drawn from the pattern's seed, which equals its position.
inline std::vector<FieldPatternSpec> default_pattern_bank() {
  std::vector<FieldPatternSpec> bank;
  bank.reserve(39);
  std::uint64_t seed = 0;
  for (int i = 0; i < 8; ++i) {
    FieldPatternSpec s;
    s.kind = PatternKind::linear_ramp;
    s.angle_deg = 45.0 * i;
    s.seed = seed++;
    bank.push_back(s);
  }
  const std::array<std::array<double, 2>, 3> centers{{{0.5, 0.5}, {0.3, 0.35}, {0.7, 0.6}}};
  for (const auto& c : centers) {
    FieldPatternSpec s;
    s.kind = PatternKind::radial;
    s.center_x = c[0];
    s.center_y = c[1];
    s.seed = seed++;
    bank.push_back(s);
  }
  const std::array<double, 4> orientations{0.0, 45.0, 90.0, 135.0};
  for (int layers = 2; layers <= 5; ++layers)
    for (double angle : orientations) {
      FieldPatternSpec s;
      s.kind = PatternKind::step_layers;
      s.angle_deg = angle;
      s.layer_count = layers;
      s.seed = seed++;
      bank.push_back(s);
    }
  for (int layers = 2; layers <= 4; ++layers)
    for (double angle : orientations) {
      FieldPatternSpec s;
      s.kind = PatternKind::smooth_layers;
      s.angle_deg = angle;
      s.layer_count = layers;
      s.seed = seed++;
      bank.push_back(s);
    }
  return bank;
}

}  // namespace svbr
