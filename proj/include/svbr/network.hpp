#pragma once

#include <span>
#include <string>
#include <vector>

#include "svbr/image.hpp"
#include "svbr/kernels.hpp"
#include "svbr/metrics.hpp"
#include "svbr/nn/blocks.hpp"

namespace svbr {

using nn::Mode;
using nn::Tensor;

struct NetworkConfig {
  int depth = 4;        // type III downsamplings per branch
  int base_width = 32;  // channels at full resolution; doubles per level
  bool zero_output = true;  // output convolution starts at zero (all-0.5 image)

  int width_at(int level) const { return base_width << level; }
  int divisor() const { return 1 << depth; }

  static NetworkConfig toy() { return {2, 8}; }
  static NetworkConfig tiny() { return {2, 4}; }
  NetworkConfig randomized_output() const { return {depth, base_width, false}; }
  friend bool operator==(const NetworkConfig&, const NetworkConfig&) = default;
};

struct FeatureShape {
  int level;
  int channels, height, width;
  friend bool operator==(const FeatureShape&, const FeatureShape&) = default;
};

/// Two interconnected U-Net branches, one fed with the blurry RGB image and
/// one with the normalized blur map.
///
/// Per branch: a type I stem; at each encoder level the branch's features are
/// concatenated with its sibling's and fused by a type I block (this output
/// is the level's U-Net skip) before a type III downsampling. The bottom
/// level fuses the same way and adds a type II block. Each decoder level
/// upsamples with a type IV block against the branch's own skip, then
/// exchanges features with the sibling through another concatenate-and-fuse.
/// A type V block merges both branches into the RGB output.
template <class T>
class Network {
 public:
  explicit Network(NetworkConfig cfg, std::uint64_t seed = 0) : cfg_(cfg), store_(seed) {
    if (cfg.depth < 1 || cfg.base_width < 1) fail(ErrorCode::domain, "Network: invalid config");
    const int d = cfg.depth;
    stem_img_ = {store_, "stem.img", 3, cfg.base_width};
    stem_map_ = {store_, "stem.map", 1, cfg.base_width};
    for (int l = 0; l < d; ++l) {
      const int w = cfg.width_at(l);
      const std::string p = "enc" + std::to_string(l);
      enc_fuse_img_.emplace_back(store_, p + ".fuse.img", 2 * w, w);
      enc_fuse_map_.emplace_back(store_, p + ".fuse.map", 2 * w, w);
      down_img_.emplace_back(store_, p + ".down.img", w);
      down_map_.emplace_back(store_, p + ".down.map", w);
    }
    const int wd = cfg.width_at(d);
    mid_fuse_img_ = {store_, "mid.fuse.img", 2 * wd, wd};
    mid_fuse_map_ = {store_, "mid.fuse.map", 2 * wd, wd};
    mid_res_img_ = {store_, "mid.res.img", wd};
    mid_res_map_ = {store_, "mid.res.map", wd};
    up_img_.resize(static_cast<std::size_t>(d));
    up_map_.resize(static_cast<std::size_t>(d));
    dec_fuse_img_.resize(static_cast<std::size_t>(d));
    dec_fuse_map_.resize(static_cast<std::size_t>(d));
    for (int l = d - 1; l >= 0; --l) {
      const int w = cfg.width_at(l);
      const std::string p = "dec" + std::to_string(l);
      const auto i = static_cast<std::size_t>(l);
      up_img_[i] = {store_, p + ".up.img", 2 * w, w};
      up_map_[i] = {store_, p + ".up.map", 2 * w, w};
      dec_fuse_img_[i] = {store_, p + ".fuse.img", 2 * w, w};
      dec_fuse_map_[i] = {store_, p + ".fuse.map", 2 * w, w};
    }
    out_ = {store_, "out", cfg.base_width};
    if (cfg.zero_output) std::fill(out_.conv().weight().value.begin(), out_.conv().weight().value.end(), T(0));
  }

  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;

  const NetworkConfig& config() const noexcept { return cfg_; }
  nn::ParamStore<T>& params() noexcept { return store_; }
  const nn::ParamStore<T>& params() const noexcept { return store_; }
  std::size_t parameter_count() const { return store_.trainable_count(); }
  void zero_grad() { store_.zero_grad(); }

  /// Encoder feature shapes of the last forward pass, both branches, per level
  /// (levels 0..depth, image branch first).
  const std::vector<FeatureShape>& encoder_shapes() const noexcept { return shapes_; }

  /// `image` is N×3×H×W in [0,1]; `map` is N×1×H×W, radii divided by 6.
  Tensor<T> forward(const Tensor<T>& image, const Tensor<T>& map, Mode mode) {
    if (image.c != 3 || map.c != 1 || image.n != map.n || image.h != map.h || image.w != map.w)
      fail(ErrorCode::shape_mismatch, "Network::forward: input shapes");
    if (image.h % cfg_.divisor() || image.w % cfg_.divisor())
      fail(ErrorCode::domain, "Network::forward: H and W must be divisible by 2^depth");
    const int d = cfg_.depth;
    shapes_.clear();
    Tensor<T> a = stem_img_.forward(image, mode);
    Tensor<T> b = stem_map_.forward(map, mode);
    skip_img_.assign(static_cast<std::size_t>(d), {});
    skip_map_.assign(static_cast<std::size_t>(d), {});
    for (int l = 0; l < d; ++l) {
      const auto i = static_cast<std::size_t>(l);
      Tensor<T> fa = enc_fuse_img_[i].forward(nn::concat_channels(a, b), mode);
      Tensor<T> fb = enc_fuse_map_[i].forward(nn::concat_channels(b, a), mode);
      record(l, fa);
      record(l, fb);
      a = down_img_[i].forward(fa, mode);
      b = down_map_[i].forward(fb, mode);
      skip_img_[i] = std::move(fa);
      skip_map_[i] = std::move(fb);
    }
    {
      Tensor<T> fa = mid_fuse_img_.forward(nn::concat_channels(a, b), mode);
      Tensor<T> fb = mid_fuse_map_.forward(nn::concat_channels(b, a), mode);
      record(d, fa);
      record(d, fb);
      a = mid_res_img_.forward(fa, mode);
      b = mid_res_map_.forward(fb, mode);
    }
    for (int l = d - 1; l >= 0; --l) {
      const auto i = static_cast<std::size_t>(l);
      Tensor<T> ua = up_img_[i].forward(a, skip_img_[i], mode);
      Tensor<T> ub = up_map_[i].forward(b, skip_map_[i], mode);
      a = dec_fuse_img_[i].forward(nn::concat_channels(ua, ub), mode);
      b = dec_fuse_map_[i].forward(nn::concat_channels(ub, ua), mode);
    }
    return out_.forward(a, b);
  }

  /// Accumulates parameter gradients for d(loss)/d(output) = `g`.
  void backward(const Tensor<T>& g) {
    const int d = cfg_.depth;
    auto [ga, gb] = out_.backward(g);
    std::vector<Tensor<T>> gskip_img(static_cast<std::size_t>(d)), gskip_map(static_cast<std::size_t>(d));
    for (int l = 0; l < d; ++l) {
      const auto i = static_cast<std::size_t>(l);
      auto [g_ua, g_ub] = cross_backward(dec_fuse_img_[i], dec_fuse_map_[i], ga, gb);
      std::tie(ga, gskip_img[i]) = up_img_[i].backward(g_ua);
      std::tie(gb, gskip_map[i]) = up_map_[i].backward(g_ub);
    }
    std::tie(ga, gb) = cross_backward(mid_fuse_img_, mid_fuse_map_, mid_res_img_.backward(ga),
                                      mid_res_map_.backward(gb));
    for (int l = d - 1; l >= 0; --l) {
      const auto i = static_cast<std::size_t>(l);
      Tensor<T> gfa = down_img_[i].backward(ga);
      Tensor<T> gfb = down_map_[i].backward(gb);
      nn::add_inplace(gfa, gskip_img[i]);
      nn::add_inplace(gfb, gskip_map[i]);
      std::tie(ga, gb) = cross_backward(enc_fuse_img_[i], enc_fuse_map_[i], gfa, gfb);
    }
    stem_img_.backward(ga);
    stem_map_.backward(gb);
  }

 private:
  // Backward through fa = F(concat(a, b)), fb = G(concat(b, a)); returns
  // the total gradients for a and b.
  static std::pair<Tensor<T>, Tensor<T>> cross_backward(nn::BlockI<T>& f, nn::BlockI<T>& g,
                                                        const Tensor<T>& gfa, const Tensor<T>& gfb) {
    Tensor<T> ca = f.backward(gfa);
    Tensor<T> cb = g.backward(gfb);
    const int half = ca.c / 2;
    auto [ga, gb_from_a] = nn::split_channels(ca, half);
    auto [gb, ga_from_b] = nn::split_channels(cb, half);
    nn::add_inplace(ga, ga_from_b);
    nn::add_inplace(gb, gb_from_a);
    return {std::move(ga), std::move(gb)};
  }

  void record(int level, const Tensor<T>& t) { shapes_.push_back({level, t.c, t.h, t.w}); }

  NetworkConfig cfg_;
  nn::ParamStore<T> store_;
  nn::BlockI<T> stem_img_, stem_map_;
  std::vector<nn::BlockI<T>> enc_fuse_img_, enc_fuse_map_;
  std::vector<nn::BlockIII<T>> down_img_, down_map_;
  nn::BlockI<T> mid_fuse_img_, mid_fuse_map_;
  nn::BlockII<T> mid_res_img_, mid_res_map_;
  std::vector<nn::BlockIV<T>> up_img_, up_map_;
  std::vector<nn::BlockI<T>> dec_fuse_img_, dec_fuse_map_;
  nn::BlockV<T> out_;
  std::vector<Tensor<T>> skip_img_, skip_map_;
  std::vector<FeatureShape> shapes_;
};

/// Packs images and blur fields into network inputs. Radii are divided by 6.
template <class T>
std::pair<Tensor<T>, Tensor<T>> make_inputs(std::span<const ImageGrid* const> images,
                                            std::span<const BlurField* const> maps) {
  if (images.empty() || images.size() != maps.size())
    fail(ErrorCode::shape_mismatch, "make_inputs: batch mismatch");
  const int h = images[0]->height(), w = images[0]->width();
  const int n = static_cast<int>(images.size());
  Tensor<T> img(n, 3, h, w), map(n, 1, h, w);
  for (int i = 0; i < n; ++i) {
    const ImageGrid& im = *images[static_cast<std::size_t>(i)];
    const BlurField& bf = *maps[static_cast<std::size_t>(i)];
    if (im.channels() != 3 || im.height() != h || im.width() != w)
      fail(ErrorCode::shape_mismatch, "make_inputs: images must be H×W×3 and share a shape");
    require_same_plane(bf.height(), bf.width(), h, w, "make_inputs");
    for (std::size_t k = 0; k < im.size(); ++k) {
      const double v = im.values()[k];
      if (!(v >= 0.0 && v <= 1.0)) fail(ErrorCode::domain, "make_inputs: image values outside [0,1]");
      img.sample_ptr(i)[k] = static_cast<T>(v);
    }
    for (std::size_t k = 0; k < bf.radii.size(); ++k) {
      const double r = bf.radii.data[k];
      if (!(r >= 0.0 && r <= kMaxRadius)) fail(ErrorCode::domain, "make_inputs: radius outside [0,6]");
      map.sample_ptr(i)[k] = static_cast<T>(r / kMaxRadius);
    }
  }
  return {std::move(img), std::move(map)};
}

template <class T>
ImageGrid to_image(const Tensor<T>& t, int sample) {
  ImageGrid out(t.h, t.w, t.c);
  const T* src = t.sample_ptr(sample);
  for (std::size_t k = 0; k < out.size(); ++k) out.values()[k] = static_cast<double>(src[k]);
  return out;
}

/// Deblurs one image given its blur map.
template <class T>
ImageGrid forward(Network<T>& net, const ImageGrid& image, const BlurField& blur_map,
                  Mode mode = Mode::eval) {
  const ImageGrid* ip = &image;
  const BlurField* mp = &blur_map;
  auto [img, map] = make_inputs<T>(std::span(&ip, 1), std::span(&mp, 1));
  return to_image(net.forward(img, map, mode), 0);
}

/// Eq.-(2)-style batch loss on network outputs plus d(loss)/d(output).
template <class T>
double ssim_loss_with_grad(const Tensor<T>& pred, const Tensor<T>& target, Tensor<T>* grad,
                           const SsimConfig& cfg = {}) {
  if (!pred.same_shape(target)) fail(ErrorCode::shape_mismatch, "ssim_loss: shape mismatch");
  if (pred.n < 1) fail(ErrorCode::domain, "ssim_loss: empty batch");
  if (grad) *grad = Tensor<T>(pred.n, pred.c, pred.h, pred.w);
  double loss = 0.0;
  const double scale = 1.0 / (static_cast<double>(pred.n) * pred.c);
  for (int i = 0; i < pred.n; ++i) {
    double s = 0.0;
    for (int c = 0; c < pred.c; ++c) {
      const std::size_t off = static_cast<std::size_t>(c) * pred.plane();
      T* g = grad ? grad->sample_ptr(i) + off : nullptr;
      s += ssim_channel(pred.sample_ptr(i) + off, target.sample_ptr(i) + off, pred.h, pred.w, cfg, g);
      if (g)
        for (std::size_t k = 0; k < pred.plane(); ++k) g[k] = static_cast<T>(-scale * g[k]);
    }
    loss += 1.0 - s / pred.c;
  }
  return loss / pred.n;
}

}  // namespace svbr
