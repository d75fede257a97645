#pragma once

#include <cmath>
#include <cstdio>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "svbr/image.hpp"
#include "svbr/kernels.hpp"

namespace svbr {

/// Gaussian-windowed SSIM constants. The window is separable; `window_1d`
/// returns its normalized 1-D factor.
struct SsimConfig {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }

  std::vector<double> window_1d() const {
    std::vector<double> g(static_cast<std::size_t>(window));
    const double mid = (window - 1) / 2.0;
    double s = 0.0;
    for (int i = 0; i < window; ++i) {
      g[static_cast<std::size_t>(i)] = std::exp(-(i - mid) * (i - mid) / (2 * sigma * sigma));
      s += g[static_cast<std::size_t>(i)];
    }
    for (double& v : g) v /= s;
    return g;
  }
};

namespace detail {

// Valid-region separable filtering: (h−k+1)×(w−k+1) output.
template <class T>
std::vector<double> filter_valid(const T* src, int h, int w, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      const T* row = src + static_cast<std::size_t>(y) * w + x;
      for (int i = 0; i < k; ++i) acc += g[static_cast<std::size_t>(i)] * static_cast<double>(row[i]);
      tmp[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i)
        acc += g[static_cast<std::size_t>(i)] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  return out;
}

// Adjoint of filter_valid: scatters an (h−k+1)×(w−k+1) map back to h×w.
inline std::vector<double> filter_valid_adjoint(const std::vector<double>& src, int h, int w,
                                                const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1, ow = w - k + 1;
  std::vector<double> tmp(static_cast<std::size_t>(h) * ow, 0.0);
  for (int y = 0; y < oh; ++y)
    for (int x = 0; x < ow; ++x) {
      const double v = src[static_cast<std::size_t>(y) * ow + x];
      for (int i = 0; i < k; ++i) tmp[static_cast<std::size_t>(y + i) * ow + x] += g[static_cast<std::size_t>(i)] * v;
    }
  std::vector<double> out(static_cast<std::size_t>(h) * w, 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < ow; ++x) {
      const double v = tmp[static_cast<std::size_t>(y) * ow + x];
      for (int i = 0; i < k; ++i) out[static_cast<std::size_t>(y) * w + x + i] += g[static_cast<std::size_t>(i)] * v;
    }
  return out;
}

}  // namespace detail

/// Mean SSIM of one channel over all valid window positions. When `grad` is
/// non-null it receives d(mean SSIM)/d(pred) for every pixel.
template <class T>
double ssim_channel(const T* pred, const T* target, int h, int w, const SsimConfig& cfg = {},
                    T* grad = nullptr) {
  if (h < cfg.window || w < cfg.window)
    fail(ErrorCode::domain, "ssim: image smaller than the SSIM window");
  const std::vector<double> g = cfg.window_1d();
  const std::size_t n = static_cast<std::size_t>(h) * w;
  std::vector<double> aa(n), bb(n), ab(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double a = pred[i], b = target[i];
    aa[i] = a * a;
    bb[i] = b * b;
    ab[i] = a * b;
  }
  const auto mu_a = detail::filter_valid(pred, h, w, g);
  const auto mu_b = detail::filter_valid(target, h, w, g);
  const auto e_aa = detail::filter_valid(aa.data(), h, w, g);
  const auto e_bb = detail::filter_valid(bb.data(), h, w, g);
  const auto e_ab = detail::filter_valid(ab.data(), h, w, g);

  const double c1 = cfg.c1(), c2 = cfg.c2();
  const std::size_t m = mu_a.size();
  double total = 0.0;
  std::vector<double> d_mu, d_aa, d_ab;
  if (grad) {
    d_mu.resize(m);
    d_aa.resize(m);
    d_ab.resize(m);
  }
  for (std::size_t p = 0; p < m; ++p) {
    const double ma = mu_a[p], mb = mu_b[p];
    const double a1 = 2 * ma * mb + c1;
    const double a2 = 2 * (e_ab[p] - ma * mb) + c2;
    const double b1 = ma * ma + mb * mb + c1;
    const double b2 = (e_aa[p] - ma * ma) + (e_bb[p] - mb * mb) + c2;
    const double den = b1 * b2;
    const double s = a1 * a2 / den;
    total += s;
    if (grad) {
      const double dn = 2 * mb * a2 - 2 * mb * a1;
      const double dd = 2 * ma * b2 - 2 * ma * b1;
      d_mu[p] = (dn - s * dd) / den / static_cast<double>(m);
      d_aa[p] = -s * b1 / den / static_cast<double>(m);
      d_ab[p] = 2 * a1 / den / static_cast<double>(m);
    }
  }
  if (grad) {
    const auto g_mu = detail::filter_valid_adjoint(d_mu, h, w, g);
    const auto g_aa = detail::filter_valid_adjoint(d_aa, h, w, g);
    const auto g_ab = detail::filter_valid_adjoint(d_ab, h, w, g);
    for (std::size_t i = 0; i < n; ++i)
      grad[i] = static_cast<T>(g_mu[i] + 2.0 * static_cast<double>(pred[i]) * g_aa[i] +
                               static_cast<double>(target[i]) * g_ab[i]);
  }
  return total / static_cast<double>(m);
}

struct SsimResult {
  std::vector<double> per_channel;
  double mean = 0.0;
};

inline SsimResult ssim(const ImageGrid& a, const ImageGrid& b, const SsimConfig& cfg = {}) {
  if (!a.same_shape(b)) fail(ErrorCode::shape_mismatch, "ssim: shape mismatch");
  SsimResult r;
  for (int c = 0; c < a.channels(); ++c) {
    r.per_channel.push_back(
        ssim_channel(a.plane(c).data(), b.plane(c).data(), a.height(), a.width(), cfg));
    r.mean += r.per_channel.back();
  }
  r.mean /= a.channels();
  return r;
}

inline constexpr double kPsnrCap = 99.0;

/// 10·log10(1/MSE); +∞ for identical inputs.
inline double psnr(const ImageGrid& a, const ImageGrid& b) {
  if (!a.same_shape(b)) fail(ErrorCode::shape_mismatch, "psnr: shape mismatch");
  double se = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.values()[i] - b.values()[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

inline double capped_psnr(double db) { return std::min(db, kPsnrCap); }

/// "0.902/26.62"-style SSIM/PSNR pair.
inline std::string format_ssim_psnr(double ssim_value, double psnr_db) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3f/%.2f", ssim_value, capped_psnr(psnr_db));
  return buf;
}

inline double mae_blur(const BlurField& a, const BlurField& b) {
  require_same_plane(a.height(), a.width(), b.height(), b.width(), "mae_blur");
  double s = 0.0;
  for (std::size_t i = 0; i < a.radii.size(); ++i) s += std::abs(a.radii.data[i] - b.radii.data[i]);
  return s / static_cast<double>(a.radii.size());
}

/// Batch loss from per-sample, per-channel SSIM values:
/// mean over samples of (1 − mean over channels).
inline double ssim_loss_from_scores(std::span<const std::vector<double>> per_sample) {
  if (per_sample.empty()) fail(ErrorCode::domain, "ssim_loss: empty batch");
  double total = 0.0;
  for (const auto& ch : per_sample) {
    double s = 0.0;
    for (double v : ch) s += v;
    total += 1.0 - s / static_cast<double>(ch.size());
  }
  return total / static_cast<double>(per_sample.size());
}

struct ImagePair {
  const ImageGrid* predicted;
  const ImageGrid* target;
};

inline double ssim_loss(std::span<const ImagePair> batch, const SsimConfig& cfg = {}) {
  if (batch.empty()) fail(ErrorCode::domain, "ssim_loss: empty batch");
  std::vector<std::vector<double>> scores;
  for (const ImagePair& p : batch) {
    if (p.predicted->channels() != 3) fail(ErrorCode::domain, "ssim_loss: need 3-channel images");
    scores.push_back(ssim(*p.predicted, *p.target, cfg).per_channel);
  }
  return ssim_loss_from_scores(scores);
}

}  // namespace svbr
