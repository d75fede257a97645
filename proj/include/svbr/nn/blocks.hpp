#pragma once

#include <string>
#include <utility>

#include "svbr/nn/layers.hpp"

namespace svbr::nn {

enum class BlockKind { I, II, III, IV, V };

inline const char* to_string(BlockKind k) {
  switch (k) {
    case BlockKind::I: return "I";
    case BlockKind::II: return "II";
    case BlockKind::III: return "III";
    case BlockKind::IV: return "IV";
    case BlockKind::V: return "V";
  }
  return "?";
}

struct BlockSpec {
  BlockKind kind;
  int in_channels;
  int out_channels;
};

inline void validate(const BlockSpec& s) {
  const bool ok = s.in_channels > 0 && s.out_channels > 0 &&
                  (s.kind != BlockKind::II || s.out_channels == s.in_channels) &&
                  (s.kind != BlockKind::III || s.out_channels == 2 * s.in_channels) &&
                  (s.kind != BlockKind::IV || (s.in_channels % 2 == 0 && s.out_channels == s.in_channels / 2)) &&
                  (s.kind != BlockKind::V || s.out_channels == 3);
  if (!ok) fail(ErrorCode::domain, std::string("invalid channel arithmetic for block ") + to_string(s.kind));
}

/// Type I: 3×3 same-padded convolution, batch norm, ReLU.
template <class T>
class BlockI {
 public:
  BlockI() = default;
  BlockI(ParamStore<T>& store, const std::string& name, int in, int out, const std::string& tag = "I")
      : conv_(store, name + ".conv", in, out, 3, 1, 1, false, tag), bn_(store, name + ".bn", out, tag) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    return relu_.forward(bn_.forward(conv_.forward(x), mode));
  }
  Tensor<T> backward(const Tensor<T>& g) { return conv_.backward(bn_.backward(relu_.backward(g))); }

  Conv2d<T>& conv() noexcept { return conv_; }
  BatchNorm2d<T>& bn() noexcept { return bn_; }

 private:
  Conv2d<T> conv_;
  BatchNorm2d<T> bn_;
  ReLU<T> relu_;
};

/// Type II: x + I(I(x)).
template <class T>
class BlockII {
 public:
  BlockII() = default;
  BlockII(ParamStore<T>& store, const std::string& name, int channels, const std::string& tag = "II")
      : first_(store, name + ".0", channels, channels, tag), second_(store, name + ".1", channels, channels, tag) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    Tensor<T> y = second_.forward(first_.forward(x, mode), mode);
    add_inplace(y, x);
    return y;
  }
  Tensor<T> backward(const Tensor<T>& g) {
    Tensor<T> gx = first_.backward(second_.backward(g));
    add_inplace(gx, g);
    return gx;
  }

  BlockI<T>& first() noexcept { return first_; }
  BlockI<T>& second() noexcept { return second_; }

 private:
  BlockI<T> first_, second_;
};

/// Type III: halves resolution and doubles channels. Sum of
///   (i) I(C→2C) → I(2C→2C) → 2×2 average pool, and
///   (ii) 2×2 stride-2 unpadded convolution (C→2C) → batch norm.
template <class T>
class BlockIII {
 public:
  BlockIII() = default;
  BlockIII(ParamStore<T>& store, const std::string& name, int in, const std::string& tag = "III")
      : a_(store, name + ".pool_path.0", in, 2 * in, tag),
        b_(store, name + ".pool_path.1", 2 * in, 2 * in, tag),
        stride_conv_(store, name + ".stride_path.conv", in, 2 * in, 2, 2, 0, false, tag),
        stride_bn_(store, name + ".stride_path.bn", 2 * in, tag) {}

  Tensor<T> forward(const Tensor<T>& x, Mode mode) {
    if (x.h % 2 || x.w % 2) fail(ErrorCode::domain, "block III: odd spatial size");
    Tensor<T> y = pool_.forward(b_.forward(a_.forward(x, mode), mode));
    add_inplace(y, stride_bn_.forward(stride_conv_.forward(x), mode));
    return y;
  }
  Tensor<T> backward(const Tensor<T>& g) {
    Tensor<T> gx = a_.backward(b_.backward(pool_.backward(g)));
    add_inplace(gx, stride_conv_.backward(stride_bn_.backward(g)));
    return gx;
  }

  BlockI<T>& pool_first() noexcept { return a_; }
  BlockI<T>& pool_second() noexcept { return b_; }
  Conv2d<T>& stride_conv() noexcept { return stride_conv_; }
  BatchNorm2d<T>& stride_bn() noexcept { return stride_bn_; }

 private:
  BlockI<T> a_, b_;
  AvgPool2<T> pool_;
  Conv2d<T> stride_conv_;
  BatchNorm2d<T> stride_bn_;
};

/// Type IV: 2×2 stride-2 transpose convolution (C→C/2), batch norm, ReLU,
/// then concatenation with the encoder skip and fusion back to C/2 channels
/// by a type I block followed by a type II block.
template <class T>
class BlockIV {
 public:
  BlockIV() = default;
  BlockIV(ParamStore<T>& store, const std::string& name, int in, int skip_channels,
          const std::string& tag = "IV")
      : up_(store, name + ".up", in, in / 2, tag),
        bn_(store, name + ".bn", in / 2, tag),
        fuse_(store, name + ".fuse", in / 2 + skip_channels, in / 2, tag),
        refine_(store, name + ".refine", in / 2, tag),
        skip_channels_(skip_channels) {}

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& skip, Mode mode) {
    if (skip.c != skip_channels_ || skip.h != 2 * x.h || skip.w != 2 * x.w || skip.n != x.n)
      fail(ErrorCode::shape_mismatch, "block IV: skip shape mismatch");
    Tensor<T> u = relu_.forward(bn_.forward(up_.forward(x), mode));
    up_channels_ = u.c;
    return refine_.forward(fuse_.forward(concat_channels(u, skip), mode), mode);
  }

  /// Returns (d/dx, d/dskip).
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& g) {
    auto [gu, gskip] = split_channels(fuse_.backward(refine_.backward(g)), up_channels_);
    Tensor<T> gx = up_.backward(bn_.backward(relu_.backward(gu)));
    return {std::move(gx), std::move(gskip)};
  }

  ConvTranspose2x2<T>& up() noexcept { return up_; }
  BatchNorm2d<T>& bn() noexcept { return bn_; }
  BlockI<T>& fuse() noexcept { return fuse_; }
  BlockII<T>& refine() noexcept { return refine_; }

 private:
  ConvTranspose2x2<T> up_;
  BatchNorm2d<T> bn_;
  ReLU<T> relu_;
  BlockI<T> fuse_;
  BlockII<T> refine_;
  int skip_channels_ = 0;
  int up_channels_ = 0;
};

/// Type V: concatenates both branches, 3×3 convolution to RGB, logistic.
template <class T>
class BlockV {
 public:
  BlockV() = default;
  BlockV(ParamStore<T>& store, const std::string& name, int branch_channels, const std::string& tag = "V")
      : conv_(store, name + ".conv", 2 * branch_channels, 3, 3, 1, 1, true, tag),
        branch_channels_(branch_channels) {}

  Tensor<T> forward(const Tensor<T>& img, const Tensor<T>& map) {
    if (!img.same_shape(map) || img.c != branch_channels_)
      fail(ErrorCode::shape_mismatch, "block V: branch shape mismatch");
    return sigmoid_.forward(conv_.forward(concat_channels(img, map)));
  }
  std::pair<Tensor<T>, Tensor<T>> backward(const Tensor<T>& g) {
    return split_channels(conv_.backward(sigmoid_.backward(g)), branch_channels_);
  }

  Conv2d<T>& conv() noexcept { return conv_; }

 private:
  Conv2d<T> conv_;
  Sigmoid<T> sigmoid_;
  int branch_channels_ = 0;
};

}  // namespace svbr::nn
