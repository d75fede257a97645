#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cmath>
#include <deque>
#include <numbers>
#include <vector>

#include "svbr/image.hpp"
#include "svbr/kernels.hpp"

namespace svbr {

/// Blur radii known only where `mask` is set.
struct SparseBlurMap {
  Grid<double> values;
  Mask mask;

  int height() const noexcept { return values.height; }
  int width() const noexcept { return values.width; }
  std::size_t known_count() const {
    std::size_t n = 0;
    for (unsigned char m : mask.data) n += m ? 1 : 0;
    return n;
  }
};

struct MattingConfig {
  int window_radius = 1;
  double epsilon = 1e-7;
  double lambda = 100.0;
  double cg_tol = 1e-6;
  int cg_max_iters = 2000;
};

struct DtConfig {
  double sigma_s = 60.0;
  double sigma_r = 0.4;
  int iterations = 3;
};

struct EdgeConfig {
  double low = 0.05;
  double high = 0.15;
};

// ---------------------------------------------------------------------------
// Edges

/// Canny-style edges on luminance: Sobel gradients (magnitude scaled so a
/// unit step reads 1), non-maximum suppression along the quantized gradient
/// direction, then hysteresis between `low` and `high`.
inline Mask detect_edges(const ImageGrid& image, double low = 0.05, double high = 0.15) {
  if (!(low >= 0.0 && low < high && high <= 1.0))
    fail(ErrorCode::domain, "detect_edges: need 0 <= low < high <= 1");
  const Grid<double> lum = luminance(image);
  const int h = lum.height, w = lum.width;
  auto px = [&](int y, int x) { return lum(clamp_index(y, h), clamp_index(x, w)); };

  Grid<double> mag(h, w), gx(h, w), gy(h, w);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double sx = (px(y - 1, x + 1) + 2 * px(y, x + 1) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y, x - 1) + px(y + 1, x - 1));
      const double sy = (px(y + 1, x - 1) + 2 * px(y + 1, x) + px(y + 1, x + 1)) -
                        (px(y - 1, x - 1) + 2 * px(y - 1, x) + px(y - 1, x + 1));
      gx(y, x) = sx / 4.0;
      gy(y, x) = sy / 4.0;
      mag(y, x) = std::hypot(gx(y, x), gy(y, x));
    }

  // Suppression keeps the pixel if it is >= its "behind" neighbour and
  // strictly > its "ahead" neighbour, so plateaus two pixels wide thin to one.
  Grid<double> thin(h, w, 0.0);
  auto m_at = [&](int y, int x) {
    return (y < 0 || y >= h || x < 0 || x >= w) ? 0.0 : mag(y, x);
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double m = mag(y, x);
      if (m <= 0.0) continue;
      double angle = std::atan2(gy(y, x), gx(y, x)) * 180.0 / std::numbers::pi;
      if (angle < 0) angle += 180.0;
      int dy = 0, dx = 0;
      if (angle < 22.5 || angle >= 157.5) dx = 1;
      else if (angle < 67.5) { dx = 1; dy = 1; }
      else if (angle < 112.5) dy = 1;
      else { dx = -1; dy = 1; }
      if (m >= m_at(y - dy, x - dx) && m > m_at(y + dy, x + dx)) thin(y, x) = m;
    }

  Mask edges(h, w, 0);
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (thin(y, x) >= high) {
        edges(y, x) = 1;
        queue.emplace_back(y, x);
      }
  while (!queue.empty()) {
    const auto [y, x] = queue.front();
    queue.pop_front();
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int ny = y + dy, nx = x + dx;
        if (ny < 0 || ny >= h || nx < 0 || nx >= w || edges(ny, nx)) continue;
        if (thin(ny, nx) >= low) {
          edges(ny, nx) = 1;
          queue.emplace_back(ny, nx);
        }
      }
  }
  return edges;
}

inline SparseBlurMap sparsify_at_edges(const BlurField& field, const Mask& edges) {
  require_same_plane(field.height(), field.width(), edges.height, edges.width,
                     "sparsify_at_edges");
  SparseBlurMap s{Grid<double>(field.height(), field.width(), 0.0), edges};
  for (std::size_t i = 0; i < edges.size(); ++i)
    if (edges.data[i]) s.values.data[i] = field.radii.data[i];
  return s;
}

// ---------------------------------------------------------------------------
// Matting Laplacian propagation

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Closed-form matting Laplacian over all (2r+1)² windows that fit inside
/// the image. Pixel (y, x) maps to row y·W + x.
inline SparseMatrix matting_laplacian(const ImageGrid& image, const MattingConfig& cfg = {}) {
  if (image.channels() != 3) fail(ErrorCode::domain, "matting_laplacian: need a 3-channel image");
  if (cfg.window_radius < 1 || !(cfg.epsilon > 0))
    fail(ErrorCode::domain, "matting_laplacian: invalid config");
  const int h = image.height(), w = image.width(), r = cfg.window_radius;
  const int side = 2 * r + 1;
  const int wn = side * side;
  const long n = static_cast<long>(h) * w;

  std::vector<Eigen::Triplet<double>> triplets;
  if (h >= side && w >= side)
    triplets.reserve(static_cast<std::size_t>(h - 2 * r) * (w - 2 * r) * wn * wn);

  std::vector<long> idx(static_cast<std::size_t>(wn));
  std::vector<Eigen::Vector3d> color(static_cast<std::size_t>(wn));
  for (int cy = r; cy < h - r; ++cy)
    for (int cx = r; cx < w - r; ++cx) {
      Eigen::Vector3d mu = Eigen::Vector3d::Zero();
      int t = 0;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx, ++t) {
          const int y = cy + dy, x = cx + dx;
          idx[static_cast<std::size_t>(t)] = static_cast<long>(y) * w + x;
          color[static_cast<std::size_t>(t)] = {image.at(0, y, x), image.at(1, y, x), image.at(2, y, x)};
          mu += color[static_cast<std::size_t>(t)];
        }
      mu /= wn;
      Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
      for (const auto& c : color) cov += (c - mu) * (c - mu).transpose();
      cov /= wn;
      const Eigen::Matrix3d inv =
          (cov + (cfg.epsilon / wn) * Eigen::Matrix3d::Identity()).inverse();
      for (int i = 0; i < wn; ++i) {
        const Eigen::RowVector3d left = (color[static_cast<std::size_t>(i)] - mu).transpose() * inv;
        for (int j = 0; j < wn; ++j) {
          const double affinity =
              (1.0 + left.dot(color[static_cast<std::size_t>(j)] - mu)) / wn;
          triplets.emplace_back(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)],
                                (i == j ? 1.0 : 0.0) - affinity);
        }
      }
    }
  SparseMatrix L(n, n);
  L.setFromTriplets(triplets.begin(), triplets.end());
  return L;
}

struct CgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  double relative_residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;  // ‖b − A·x_k‖ / ‖b‖, k = 0..iterations
};

/// Conjugate gradient for a symmetric positive definite `a`, started from
/// `x0` (zero when empty). With `jacobi` set the iteration is preconditioned
/// by diag(a). The returned iterate is the minimal-residual smoothing of the
/// CG sequence: each step takes the point on the segment between the
/// previous smoothed iterate and the new CG iterate with the smallest
/// residual, so the reported residual never increases and is never worse
/// than any CG residual seen so far.
inline CgResult conjugate_gradient(const SparseMatrix& a, const Eigen::VectorXd& b, double tol,
                                   int max_iters, bool jacobi = true,
                                   const Eigen::VectorXd& x0 = {}) {
  CgResult res;
  const long n = b.size();
  Eigen::VectorXd x = x0.size() == n ? x0 : Eigen::VectorXd::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.x = Eigen::VectorXd::Zero(n);
    res.converged = true;
    res.residual_history.push_back(0.0);
    return res;
  }
  Eigen::VectorXd inv_diag = Eigen::VectorXd::Ones(n);
  if (jacobi) {
    const Eigen::VectorXd d = a.diagonal();
    for (long i = 0; i < n; ++i) inv_diag[i] = d[i] > 0 ? 1.0 / d[i] : 1.0;
  }
  Eigen::VectorXd r = b - a * x;
  Eigen::VectorXd y = x, s = r;  // smoothed iterate and its residual
  Eigen::VectorXd z = inv_diag.cwiseProduct(r);
  Eigen::VectorXd p = z;
  double rz = r.dot(z);
  res.relative_residual = s.norm() / bnorm;
  res.residual_history.push_back(res.relative_residual);
  for (int k = 0; k < max_iters; ++k) {
    if (res.relative_residual <= tol) break;
    const Eigen::VectorXd ap = a * p;
    const double pap = p.dot(ap);
    if (!(pap > 0.0)) break;
    const double alpha = rz / pap;
    x += alpha * p;
    r -= alpha * ap;
    const Eigen::VectorXd dr = r - s;
    const double dd = dr.squaredNorm();
    if (dd > 0.0) {
      const double eta = std::clamp(-s.dot(dr) / dd, 0.0, 1.0);
      s += eta * dr;
      y += eta * (x - y);
    }
    res.iterations = k + 1;
    res.relative_residual = s.norm() / bnorm;
    res.residual_history.push_back(res.relative_residual);
    z = inv_diag.cwiseProduct(r);
    const double rz_next = r.dot(z);
    p = z + (rz_next / rz) * p;
    rz = rz_next;
  }
  res.x = std::move(y);
  res.converged = res.relative_residual <= tol;
  return res;
}

struct PropagationResult {
  BlurField field;
  bool converged = true;
  int iterations = 0;
  double residual = 0.0;
};

/// The linear system solved by matting propagation: (L + λD) b = λ D s.
struct MattingSystem {
  SparseMatrix matrix;
  Eigen::VectorXd rhs;
};

inline MattingSystem matting_system(const SparseBlurMap& sparse, const ImageGrid& image,
                                    const MattingConfig& cfg) {
  require_same_plane(sparse.height(), sparse.width(), image.height(), image.width(),
                     "propagate_matting");
  if (sparse.known_count() == 0)
    fail(ErrorCode::no_constraints, "propagate_matting: no constraints");
  if (!(cfg.lambda > 0)) fail(ErrorCode::domain, "propagate_matting: lambda must be > 0");
  MattingSystem sys{matting_laplacian(to_rgb(image), cfg), {}};
  const long n = sys.matrix.rows();
  sys.rhs = Eigen::VectorXd::Zero(n);
  for (long i = 0; i < n; ++i)
    if (sparse.mask.data[static_cast<std::size_t>(i)]) {
      sys.matrix.coeffRef(i, i) += cfg.lambda;
      sys.rhs[i] = cfg.lambda * sparse.values.data[static_cast<std::size_t>(i)];
    }
  sys.matrix.makeCompressed();
  return sys;
}

/// Densifies `sparse` with the matting Laplacian of `image` as smoothness
/// prior and a soft λ-weighted fit to the known values. The solve starts from
/// the mean known value. A non-converged solve still returns its last
/// iterate, with `converged` cleared.
inline PropagationResult propagate_matting(const SparseBlurMap& sparse, const ImageGrid& image,
                                           const MattingConfig& cfg = {}) {
  const MattingSystem sys = matting_system(sparse, image, cfg);
  double mean = 0.0;
  for (std::size_t i = 0; i < sparse.mask.size(); ++i)
    if (sparse.mask.data[i]) mean += sparse.values.data[i];
  mean /= static_cast<double>(sparse.known_count());
  const Eigen::VectorXd x0 = Eigen::VectorXd::Constant(sys.rhs.size(), mean);
  const CgResult cg = conjugate_gradient(sys.matrix, sys.rhs, cfg.cg_tol, cfg.cg_max_iters, true, x0);
  PropagationResult out{BlurField(sparse.height(), sparse.width()), cg.converged, cg.iterations,
                        cg.relative_residual};
  for (std::size_t i = 0; i < out.field.radii.size(); ++i)
    out.field.radii.data[i] = std::clamp(cg.x[static_cast<long>(i)], 0.0, kMaxRadius);
  return out;
}

// ---------------------------------------------------------------------------
// Domain transform propagation

/// Cumulative domain transforms: `horizontal(y, x)` integrates along row y,
/// `vertical(y, x)` along column x. Both start at 0.
struct DomainTransforms {
  Grid<double> horizontal;
  Grid<double> vertical;
};

inline DomainTransforms domain_transform(const ImageGrid& guide, const DtConfig& cfg = {}) {
  if (!(cfg.sigma_s > 0) || !(cfg.sigma_r > 0))
    fail(ErrorCode::domain, "domain_transform: sigmas must be > 0");
  const int h = guide.height(), w = guide.width();
  const double ratio = cfg.sigma_s / cfg.sigma_r;
  DomainTransforms dt{Grid<double>(h, w, 0.0), Grid<double>(h, w, 0.0)};
  for (int y = 0; y < h; ++y)
    for (int x = 1; x < w; ++x) {
      double g = 0.0;
      for (int c = 0; c < guide.channels(); ++c) g += std::abs(guide.at(c, y, x) - guide.at(c, y, x - 1));
      dt.horizontal(y, x) = dt.horizontal(y, x - 1) + 1.0 + ratio * g;
    }
  for (int x = 0; x < w; ++x)
    for (int y = 1; y < h; ++y) {
      double g = 0.0;
      for (int c = 0; c < guide.channels(); ++c) g += std::abs(guide.at(c, y, x) - guide.at(c, y - 1, x));
      dt.vertical(y, x) = dt.vertical(y - 1, x) + 1.0 + ratio * g;
    }
  return dt;
}

/// Feedback coefficient of the recursive filter at iteration `i` (0-based)
/// of `iterations`; the kernel's sigma halves from one iteration to the next.
inline double dt_feedback(const DtConfig& cfg, int i) {
  const int n = cfg.iterations;
  const double sigma_h = cfg.sigma_s * std::sqrt(3.0) * std::pow(2.0, n - (i + 1)) /
                         std::sqrt(std::pow(4.0, n) - 1.0);
  return std::exp(-std::sqrt(2.0) / sigma_h);
}

/// Causal then anti-causal first-order recursion along one scanline whose
/// cumulative transform is `ct`; `stride` steps between samples.
inline void recursive_filter_line(double* line, const double* ct, int n, std::size_t stride,
                                  double a) {
  for (int i = 1; i < n; ++i) {
    const double wgt = std::pow(a, ct[i * stride] - ct[(i - 1) * stride]);
    line[i * stride] += wgt * (line[(i - 1) * stride] - line[i * stride]);
  }
  for (int i = n - 2; i >= 0; --i) {
    const double wgt = std::pow(a, ct[(i + 1) * stride] - ct[i * stride]);
    line[i * stride] += wgt * (line[(i + 1) * stride] - line[i * stride]);
  }
}

inline void dt_horizontal_pass(Grid<double>& g, const DomainTransforms& dt, double a) {
  for (int y = 0; y < g.height; ++y)
    recursive_filter_line(&g(y, 0), &dt.horizontal(y, 0), g.width, 1, a);
}

inline void dt_vertical_pass(Grid<double>& g, const DomainTransforms& dt, double a) {
  for (int x = 0; x < g.width; ++x)
    recursive_filter_line(&g(0, x), &dt.vertical(0, x), g.height,
                          static_cast<std::size_t>(g.width), a);
}

/// Edge-aware recursive filtering: `cfg.iterations` rounds of a horizontal
/// then a vertical pass.
inline Grid<double> dt_filter(Grid<double> values, const DomainTransforms& dt, const DtConfig& cfg) {
  require_same_plane(values.height, values.width, dt.horizontal.height, dt.horizontal.width,
                     "dt_filter");
  for (int i = 0; i < cfg.iterations; ++i) {
    const double a = dt_feedback(cfg, i);
    dt_horizontal_pass(values, dt, a);
    dt_vertical_pass(values, dt, a);
  }
  return values;
}

namespace detail {

// Value of the closest known pixel (4-connected BFS from all known pixels in
// raster order).
inline Grid<double> nearest_known(const SparseBlurMap& sparse) {
  const int h = sparse.height(), w = sparse.width();
  Grid<double> out(h, w, 0.0);
  Mask seen(h, w, 0);
  std::deque<std::pair<int, int>> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (sparse.mask(y, x)) {
        seen(y, x) = 1;
        out(y, x) = sparse.values(y, x);
        queue.emplace_back(y, x);
      }
  constexpr int dy[4] = {-1, 1, 0, 0};
  constexpr int dx[4] = {0, 0, -1, 1};
  while (!queue.empty()) {
    const auto [y, x] = queue.front();
    queue.pop_front();
    for (int k = 0; k < 4; ++k) {
      const int ny = y + dy[k], nx = x + dx[k];
      if (ny < 0 || ny >= h || nx < 0 || nx >= w || seen(ny, nx)) continue;
      seen(ny, nx) = 1;
      out(ny, nx) = out(y, x);
      queue.emplace_back(ny, nx);
    }
  }
  return out;
}

}  // namespace detail

/// Normalized domain-transform interpolation: filters values·mask and mask
/// with the same edge-aware recursive filter and divides.
inline PropagationResult propagate_dt(const SparseBlurMap& sparse, const ImageGrid& image,
                                      const DtConfig& cfg = {}) {
  require_same_plane(sparse.height(), sparse.width(), image.height(), image.width(),
                     "propagate_dt");
  if (sparse.known_count() == 0) fail(ErrorCode::no_constraints, "propagate_dt: no constraints");
  if (cfg.iterations < 1) fail(ErrorCode::domain, "propagate_dt: iterations must be >= 1");
  const DomainTransforms dt = domain_transform(image, cfg);
  const int h = sparse.height(), w = sparse.width();
  Grid<double> num(h, w), den(h, w);
  for (std::size_t i = 0; i < num.size(); ++i) {
    den.data[i] = sparse.mask.data[i] ? 1.0 : 0.0;
    num.data[i] = den.data[i] * sparse.values.data[i];
  }
  num = dt_filter(std::move(num), dt, cfg);
  den = dt_filter(std::move(den), dt, cfg);

  Grid<double> fallback;
  PropagationResult out{BlurField(h, w)};
  for (std::size_t i = 0; i < num.size(); ++i) {
    double v;
    if (den.data[i] < 1e-8) {
      if (fallback.size() == 0) fallback = detail::nearest_known(sparse);
      v = fallback.data[i];
    } else {
      v = num.data[i] / den.data[i];
    }
    out.field.radii.data[i] = std::clamp(v, 0.0, kMaxRadius);
  }
  return out;
}

// ---------------------------------------------------------------------------

struct AugmentedVariants {
  BlurField matting;
  BlurField dt;
  Mask edges;
  bool matting_converged = true;
};

/// Emulated estimator output: keep the true radii on the image's edges and
/// densify with both propagation schemes.
inline AugmentedVariants make_augmented_variants(const BlurField& field, const ImageGrid& image,
                                                 const MattingConfig& m_cfg = {},
                                                 const DtConfig& d_cfg = {},
                                                 const EdgeConfig& e_cfg = {}) {
  require_same_plane(field.height(), field.width(), image.height(), image.width(),
                     "make_augmented_variants");
  Mask edges = detect_edges(image, e_cfg.low, e_cfg.high);
  const SparseBlurMap sparse = sparsify_at_edges(field, edges);
  PropagationResult m = propagate_matting(sparse, image, m_cfg);
  PropagationResult d = propagate_dt(sparse, image, d_cfg);
  return {std::move(m.field), std::move(d.field), std::move(edges), m.converged};
}

}  // namespace svbr
