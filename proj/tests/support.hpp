#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "svbr/svbr.hpp"

namespace svbr::oracle {

/// Piecewise-smooth synthetic photo: a shaded background, a few flat
/// rectangles and discs in random colors, and a faint texture.
inline ImageGrid toy_scene(int h, int w, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageGrid img(h, w, 3);
  const double base[3] = {0.2 + 0.3 * u(rng), 0.2 + 0.3 * u(rng), 0.2 + 0.3 * u(rng)};
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(c, y, x) = base[c] + 0.2 * x / w + 0.1 * y / h;
  for (int s = 0; s < 6; ++s) {
    const double col[3] = {u(rng), u(rng), u(rng)};
    const double cx = u(rng) * w, cy = u(rng) * h;
    const double rx = (0.1 + 0.2 * u(rng)) * w, ry = (0.1 + 0.2 * u(rng)) * h;
    const bool disc = u(rng) < 0.5;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const double dx = (x - cx) / rx, dy = (y - cy) / ry;
        const bool inside = disc ? dx * dx + dy * dy <= 1.0 : std::abs(dx) <= 1 && std::abs(dy) <= 1;
        if (inside)
          for (int c = 0; c < 3; ++c) img.at(c, y, x) = col[c];
      }
  }
  const double fx = 0.3 + 0.4 * u(rng), fy = 0.2 + 0.4 * u(rng);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        img.at(c, y, x) += 0.03 * std::sin(fx * x + c) * std::cos(fy * y);
  img.clamp(0.0, 1.0);
  return img;
}

inline ImageGrid random_image(int h, int w, int c, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  ImageGrid img(h, w, c);
  for (double& v : img.values()) v = u(rng);
  return img;
}

/// Anti-aliased disk coverage at 64×64 samples per pixel, computed from
/// integer sample coordinates.
inline std::vector<double> disk_oracle(double radius, int support) {
  constexpr int S = 64;
  const int half = support / 2;
  std::vector<double> w(static_cast<std::size_t>(support) * support, 0.0);
  double total = 0.0;
  for (int py = 0; py < support; ++py)
    for (int px = 0; px < support; ++px) {
      double acc = 0.0;
      for (int sy = 0; sy < S; ++sy)
        for (int sx = 0; sx < S; ++sx) {
          const double y = (py - half) + (2.0 * sy + 1.0 - S) / (2.0 * S);
          const double x = (px - half) + (2.0 * sx + 1.0 - S) / (2.0 * S);
          const double cover = (radius - std::sqrt(x * x + y * y)) * S + 0.5;
          acc += cover < 0 ? 0.0 : (cover > 1 ? 1.0 : cover);
        }
      w[static_cast<std::size_t>(py) * support + px] = acc;
      total += acc;
    }
  for (double& v : w) v /= total;
  return w;
}

/// Direct replicate-boundary convolution of one plane.
inline ImageGrid convolve_oracle(const ImageGrid& img, const std::vector<double>& k, int support) {
  const int half = support / 2, h = img.height(), w = img.width();
  ImageGrid out(h, w, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double acc = 0.0;
        for (int i = 0; i < support; ++i)
          for (int j = 0; j < support; ++j) {
            const int yy = std::min(std::max(y + i - half, 0), h - 1);
            const int xx = std::min(std::max(x + j - half, 0), w - 1);
            acc += k[static_cast<std::size_t>(i) * support + j] * img.at(c, yy, xx);
          }
        out.at(c, y, x) = acc;
      }
  return out;
}

/// SSIM of one channel straight from the definition: every valid window
/// position, full 2-D Gaussian weights, no separability.
inline double ssim_oracle(const ImageGrid& a, const ImageGrid& b, int c) {
  const int k = 11;
  const double sigma = 1.5, c1 = 1e-4, c2 = 9e-4;
  std::vector<double> g(k * k);
  double gs = 0.0;
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) {
      const double d2 = (i - 5.0) * (i - 5.0) + (j - 5.0) * (j - 5.0);
      gs += g[static_cast<std::size_t>(i * k + j)] = std::exp(-d2 / (2 * sigma * sigma));
    }
  for (double& v : g) v /= gs;
  double total = 0.0;
  int count = 0;
  for (int y = 0; y + k <= a.height(); ++y)
    for (int x = 0; x + k <= a.width(); ++x) {
      double ma = 0, mb = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          ma += g[static_cast<std::size_t>(i * k + j)] * a.at(c, y + i, x + j);
          mb += g[static_cast<std::size_t>(i * k + j)] * b.at(c, y + i, x + j);
        }
      double va = 0, vb = 0, cov = 0;
      for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
          const double wgt = g[static_cast<std::size_t>(i * k + j)];
          const double da = a.at(c, y + i, x + j) - ma, db = b.at(c, y + i, x + j) - mb;
          va += wgt * da * da;
          vb += wgt * db * db;
          cov += wgt * da * db;
        }
      total += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
      ++count;
    }
  return total / count;
}

/// Fresh empty directory under the system temp dir.
inline std::string scratch_dir(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("svbr_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

// Dense closed-form matting Laplacian, entry by entry from the window sums.
inline Eigen::MatrixXd dense_laplacian(const ImageGrid& img, double eps) {
  const int h = img.height(), w = img.width(), n = h * w;
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  for (int cy = 1; cy + 1 < h; ++cy)
    for (int cx = 1; cx + 1 < w; ++cx) {
      double mu[3] = {0, 0, 0};
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          for (int c = 0; c < 3; ++c) mu[c] += img.at(c, cy + dy, cx + dx) / 9.0;
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          for (int a = 0; a < 3; ++a)
            for (int b = 0; b < 3; ++b)
              cov(a, b) += (img.at(a, cy + dy, cx + dx) - mu[a]) * (img.at(b, cy + dy, cx + dx) - mu[b]) / 9.0;
      const Eigen::Matrix3d inv = (cov + eps / 9.0 * Eigen::Matrix3d::Identity()).inverse();
      for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 9; ++j) {
          const int yi = cy + i / 3 - 1, xi = cx + i % 3 - 1, yj = cy + j / 3 - 1, xj = cx + j % 3 - 1;
          Eigen::Vector3d ci, cj;
          for (int c = 0; c < 3; ++c) {
            ci[c] = img.at(c, yi, xi) - mu[c];
            cj[c] = img.at(c, yj, xj) - mu[c];
          }
          L(yi * w + xi, yj * w + xj) += (i == j ? 1.0 : 0.0) - (1.0 + ci.dot(inv * cj)) / 9.0;
        }
    }
  return L;
}

inline SparseBlurMap random_sparse(int h, int w, std::uint64_t seed, double density = 0.25) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  SparseBlurMap s{Grid<double>(h, w, 0.0), Mask(h, w, 0)};
  for (std::size_t i = 0; i < s.mask.size(); ++i)
    if (u(rng) < density) {
      s.mask.data[i] = 1;
      s.values.data[i] = 0.5 + 5.0 * u(rng);
    }
  if (s.known_count() == 0) {
    s.mask.data[0] = 1;
    s.values.data[0] = 2.0;
  }
  return s;
}

template <class Fn>
ErrorCode error_code_of(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return static_cast<ErrorCode>(-1);
}

}  // namespace svbr::oracle
