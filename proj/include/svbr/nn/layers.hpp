#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "svbr/nn/tensor.hpp"

namespace svbr::nn {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <class T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

/// k×k convolution with zero padding, via im2col and a GEMM per sample.
/// Weight layout [out][in][ky][kx].
template <class T>
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(ParamStore<T>& store, const std::string& name, int in, int out, int k, int stride,
         int pad, bool bias, const std::string& block)
      : in_(in), out_(out), k_(k), stride_(stride), pad_(pad) {
    weight_ = &store.add(name + ".weight", {out, in, k, k}, true, block);
    store.he_init(*weight_, in * k * k);
    if (bias) bias_ = &store.add(name + ".bias", {out}, true, block);
  }

  int in_channels() const noexcept { return in_; }
  int out_channels() const noexcept { return out_; }
  Param<T>& weight() noexcept { return *weight_; }
  Param<T>* bias() noexcept { return bias_; }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c != in_) fail(ErrorCode::shape_mismatch, "conv: channel mismatch");
    in_shape_ = {x.n, x.c, x.h, x.w};
    oh_ = (x.h + 2 * pad_ - k_) / stride_ + 1;
    ow_ = (x.w + 2 * pad_ - k_) / stride_ + 1;
    const int rows = in_ * k_ * k_, cols = oh_ * ow_;
    cols_.assign(static_cast<std::size_t>(x.n), RowMatrix<T>(rows, cols));
    Tensor<T> y(x.n, out_, oh_, ow_);
    ConstMatrixMap<T> wm(weight_->value.data(), out_, rows);
    for (int i = 0; i < x.n; ++i) {
      im2col(x, i, cols_[static_cast<std::size_t>(i)]);
      MatrixMap<T> ym(y.sample_ptr(i), out_, cols);
      ym.noalias() = wm * cols_[static_cast<std::size_t>(i)];
      if (bias_)
        for (int o = 0; o < out_; ++o) ym.row(o).array() += bias_->value[static_cast<std::size_t>(o)];
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int rows = in_ * k_ * k_, cols = oh_ * ow_;
    Tensor<T> gx(in_shape_[0], in_shape_[1], in_shape_[2], in_shape_[3]);
    ConstMatrixMap<T> wm(weight_->value.data(), out_, rows);
    MatrixMap<T> gw(weight_->grad.data(), out_, rows);
    RowMatrix<T> gcol(rows, cols);
    for (int i = 0; i < gy.n; ++i) {
      ConstMatrixMap<T> gym(gy.sample_ptr(i), out_, cols);
      gw.noalias() += gym * cols_[static_cast<std::size_t>(i)].transpose();
      if (bias_)
        for (int o = 0; o < out_; ++o) bias_->grad[static_cast<std::size_t>(o)] += gym.row(o).sum();
      gcol.noalias() = wm.transpose() * gym;
      col2im(gcol, gx, i);
    }
    return gx;
  }

 private:
  void im2col(const Tensor<T>& x, int i, RowMatrix<T>& col) const {
    const T* src = x.sample_ptr(i);
    for (int c = 0; c < in_; ++c)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          T* dst = col.data() + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * oh_ * ow_;
          for (int oy = 0; oy < oh_; ++oy) {
            const int y = oy * stride_ - pad_ + ky;
            for (int ox = 0; ox < ow_; ++ox) {
              const int xx = ox * stride_ - pad_ + kx;
              dst[oy * ow_ + ox] = (y < 0 || y >= x.h || xx < 0 || xx >= x.w)
                                       ? T{}
                                       : src[(static_cast<std::size_t>(c) * x.h + y) * x.w + xx];
            }
          }
        }
  }

  void col2im(const RowMatrix<T>& col, Tensor<T>& gx, int i) const {
    T* dst = gx.sample_ptr(i);
    for (int c = 0; c < in_; ++c)
      for (int ky = 0; ky < k_; ++ky)
        for (int kx = 0; kx < k_; ++kx) {
          const T* src = col.data() + static_cast<std::size_t>((c * k_ + ky) * k_ + kx) * oh_ * ow_;
          for (int oy = 0; oy < oh_; ++oy) {
            const int y = oy * stride_ - pad_ + ky;
            if (y < 0 || y >= gx.h) continue;
            for (int ox = 0; ox < ow_; ++ox) {
              const int xx = ox * stride_ - pad_ + kx;
              if (xx < 0 || xx >= gx.w) continue;
              dst[(static_cast<std::size_t>(c) * gx.h + y) * gx.w + xx] += src[oy * ow_ + ox];
            }
          }
        }
  }

  int in_ = 0, out_ = 0, k_ = 1, stride_ = 1, pad_ = 0;
  Param<T>* weight_ = nullptr;
  Param<T>* bias_ = nullptr;
  std::array<int, 4> in_shape_{};
  int oh_ = 0, ow_ = 0;
  std::vector<RowMatrix<T>> cols_;
};

/// 2×2, stride-2 transpose convolution without bias. Weight layout
/// [in][out][ky][kx]; output pixel (2y+ky, 2x+kx) receives in(y, x)·w.
template <class T>
class ConvTranspose2x2 {
 public:
  ConvTranspose2x2() = default;
  ConvTranspose2x2(ParamStore<T>& store, const std::string& name, int in, int out,
                   const std::string& block)
      : in_(in), out_(out) {
    weight_ = &store.add(name + ".weight", {in, out, 2, 2}, true, block);
    store.he_init(*weight_, in);
  }

  Param<T>& weight() noexcept { return *weight_; }

  Tensor<T> forward(const Tensor<T>& x) {
    if (x.c != in_) fail(ErrorCode::shape_mismatch, "conv_transpose: channel mismatch");
    x_ = x;
    const int hw = x.h * x.w;
    Tensor<T> y(x.n, out_, 2 * x.h, 2 * x.w);
    ConstMatrixMap<T> wm(weight_->value.data(), in_, out_ * 4);
    RowMatrix<T> cols(out_ * 4, hw);
    for (int i = 0; i < x.n; ++i) {
      ConstMatrixMap<T> xm(x.sample_ptr(i), in_, hw);
      cols.noalias() = wm.transpose() * xm;
      for (int o = 0; o < out_; ++o)
        for (int k = 0; k < 4; ++k) {
          const int ky = k / 2, kx = k % 2;
          const T* src = cols.data() + static_cast<std::size_t>(o * 4 + k) * hw;
          for (int yy = 0; yy < x.h; ++yy)
            for (int xx = 0; xx < x.w; ++xx) y.at(i, o, 2 * yy + ky, 2 * xx + kx) = src[yy * x.w + xx];
        }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const int hw = x_.h * x_.w;
    Tensor<T> gx(x_.n, in_, x_.h, x_.w);
    ConstMatrixMap<T> wm(weight_->value.data(), in_, out_ * 4);
    MatrixMap<T> gw(weight_->grad.data(), in_, out_ * 4);
    RowMatrix<T> cols(out_ * 4, hw);
    for (int i = 0; i < x_.n; ++i) {
      for (int o = 0; o < out_; ++o)
        for (int k = 0; k < 4; ++k) {
          const int ky = k / 2, kx = k % 2;
          T* dst = cols.data() + static_cast<std::size_t>(o * 4 + k) * hw;
          for (int yy = 0; yy < x_.h; ++yy)
            for (int xx = 0; xx < x_.w; ++xx) dst[yy * x_.w + xx] = gy.at(i, o, 2 * yy + ky, 2 * xx + kx);
        }
      ConstMatrixMap<T> xm(x_.sample_ptr(i), in_, hw);
      gw.noalias() += xm * cols.transpose();
      MatrixMap<T> gxm(gx.sample_ptr(i), in_, hw);
      gxm.noalias() = wm * cols;
    }
    return gx;
  }

 private:
  int in_ = 0, out_ = 0;
  Param<T>* weight_ = nullptr;
  Tensor<T> x_;
};

/// Per-channel batch normalization. Train mode normalizes with the batch
/// statistics and updates the running estimates; eval mode uses the
/// running estimates.
template <class T>
class BatchNorm2d {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.1;

  BatchNorm2d() = default;
  BatchNorm2d(ParamStore<T>& store, const std::string& name, int channels, const std::string& block)
      : c_(channels) {
    gamma_ = &store.add(name + ".gamma", {channels}, true, block, T(1));
    beta_ = &store.add(name + ".beta", {channels}, true, block, T(0));
    running_mean_ = &store.add(name + ".running_mean", {channels}, false, block, T(0));
    running_var_ = &store.add(name + ".running_var", {channels}, false, block, T(1));
  }

  Param<T>& gamma() noexcept { return *gamma_; }
  Param<T>& beta() noexcept { return *beta_; }
  Param<T>& running_mean() noexcept { return *running_mean_; }
  Param<T>& running_var() noexcept { return *running_var_; }

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (x.c != c_) fail(ErrorCode::shape_mismatch, "batchnorm: channel mismatch");
    mode_ = mode;
    const std::size_t hw = x.plane();
    const double count = static_cast<double>(x.n) * static_cast<double>(hw);
    xhat_ = Tensor<T>(x.n, x.c, x.h, x.w);
    inv_std_.assign(static_cast<std::size_t>(c_), T{});
    Tensor<T> y(x.n, x.c, x.h, x.w);
    for (int ch = 0; ch < c_; ++ch) {
      double mean, var;
      if (mode == Mode::train) {
        double s = 0.0;
        for (int i = 0; i < x.n; ++i) {
          const T* p = x.sample_ptr(i) + ch * hw;
          for (std::size_t k = 0; k < hw; ++k) s += p[k];
        }
        mean = s / count;
        double v = 0.0;
        for (int i = 0; i < x.n; ++i) {
          const T* p = x.sample_ptr(i) + ch * hw;
          for (std::size_t k = 0; k < hw; ++k) v += (p[k] - mean) * (p[k] - mean);
        }
        var = v / count;
        const double unbiased = count > 1 ? v / (count - 1) : var;
        T& rm = running_mean_->value[static_cast<std::size_t>(ch)];
        T& rv = running_var_->value[static_cast<std::size_t>(ch)];
        rm = static_cast<T>((1 - kMomentum) * rm + kMomentum * mean);
        rv = static_cast<T>((1 - kMomentum) * rv + kMomentum * unbiased);
      } else {
        mean = running_mean_->value[static_cast<std::size_t>(ch)];
        var = running_var_->value[static_cast<std::size_t>(ch)];
      }
      const T inv = static_cast<T>(1.0 / std::sqrt(var + kEps));
      inv_std_[static_cast<std::size_t>(ch)] = inv;
      const T g = gamma_->value[static_cast<std::size_t>(ch)];
      const T b = beta_->value[static_cast<std::size_t>(ch)];
      const T m = static_cast<T>(mean);
      for (int i = 0; i < x.n; ++i) {
        const T* p = x.sample_ptr(i) + ch * hw;
        T* xh = xhat_.sample_ptr(i) + ch * hw;
        T* q = y.sample_ptr(i) + ch * hw;
        for (std::size_t k = 0; k < hw; ++k) {
          xh[k] = (p[k] - m) * inv;
          q[k] = g * xh[k] + b;
        }
      }
    }
    return y;
  }

  Tensor<T> backward(const Tensor<T>& gy) {
    const std::size_t hw = gy.plane();
    const T count = static_cast<T>(static_cast<double>(gy.n) * static_cast<double>(hw));
    Tensor<T> gx(gy.n, gy.c, gy.h, gy.w);
    for (int ch = 0; ch < c_; ++ch) {
      T sum_g{}, sum_gx{};
      for (int i = 0; i < gy.n; ++i) {
        const T* g = gy.sample_ptr(i) + ch * hw;
        const T* xh = xhat_.sample_ptr(i) + ch * hw;
        for (std::size_t k = 0; k < hw; ++k) {
          sum_g += g[k];
          sum_gx += g[k] * xh[k];
        }
      }
      beta_->grad[static_cast<std::size_t>(ch)] += sum_g;
      gamma_->grad[static_cast<std::size_t>(ch)] += sum_gx;
      const T scale = gamma_->value[static_cast<std::size_t>(ch)] * inv_std_[static_cast<std::size_t>(ch)];
      for (int i = 0; i < gy.n; ++i) {
        const T* g = gy.sample_ptr(i) + ch * hw;
        const T* xh = xhat_.sample_ptr(i) + ch * hw;
        T* out = gx.sample_ptr(i) + ch * hw;
        if (mode_ == Mode::train) {
          for (std::size_t k = 0; k < hw; ++k)
            out[k] = scale * (g[k] - sum_g / count - xh[k] * sum_gx / count);
        } else {
          for (std::size_t k = 0; k < hw; ++k) out[k] = scale * g[k];
        }
      }
    }
    return gx;
  }

 private:
  int c_ = 0;
  Param<T>* gamma_ = nullptr;
  Param<T>* beta_ = nullptr;
  Param<T>* running_mean_ = nullptr;
  Param<T>* running_var_ = nullptr;
  Mode mode_ = Mode::train;
  Tensor<T> xhat_;
  std::vector<T> inv_std_;
};

template <class T>
class ReLU {
 public:
  Tensor<T> forward(Tensor<T> x) {
    mask_.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      mask_[i] = x.data[i] > T{};
      if (!mask_[i]) x.data[i] = T{};
    }
    return x;
  }
  Tensor<T> backward(Tensor<T> g) const {
    for (std::size_t i = 0; i < g.size(); ++i)
      if (!mask_[i]) g.data[i] = T{};
    return g;
  }

 private:
  std::vector<bool> mask_;
};

template <class T>
class AvgPool2 {
 public:
  Tensor<T> forward(const Tensor<T>& x) {
    if (x.h % 2 || x.w % 2) fail(ErrorCode::domain, "avgpool: odd spatial size");
    Tensor<T> y(x.n, x.c, x.h / 2, x.w / 2);
    for (int i = 0; i < x.n; ++i)
      for (int c = 0; c < x.c; ++c)
        for (int yy = 0; yy < y.h; ++yy)
          for (int xx = 0; xx < y.w; ++xx)
            y.at(i, c, yy, xx) = T(0.25) * (x.at(i, c, 2 * yy, 2 * xx) + x.at(i, c, 2 * yy, 2 * xx + 1) +
                                            x.at(i, c, 2 * yy + 1, 2 * xx) +
                                            x.at(i, c, 2 * yy + 1, 2 * xx + 1));
    return y;
  }
  Tensor<T> backward(const Tensor<T>& g) const {
    Tensor<T> gx(g.n, g.c, g.h * 2, g.w * 2);
    for (int i = 0; i < g.n; ++i)
      for (int c = 0; c < g.c; ++c)
        for (int yy = 0; yy < gx.h; ++yy)
          for (int xx = 0; xx < gx.w; ++xx) gx.at(i, c, yy, xx) = T(0.25) * g.at(i, c, yy / 2, xx / 2);
    return gx;
  }
};

template <class T>
class Sigmoid {
 public:
  Tensor<T> forward(Tensor<T> x) {
    for (T& v : x.data) v = T(1) / (T(1) + std::exp(-v));
    y_ = x;
    return x;
  }
  Tensor<T> backward(Tensor<T> g) const {
    for (std::size_t i = 0; i < g.size(); ++i) g.data[i] *= y_.data[i] * (T(1) - y_.data[i]);
    return g;
  }

 private:
  Tensor<T> y_;
};

}  // namespace svbr::nn
