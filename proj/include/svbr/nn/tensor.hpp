#pragma once

#include <cstddef>
#include <deque>
#include <random>
#include <string>
#include <vector>

#include "svbr/error.hpp"

namespace svbr::nn {

/// Dense NCHW tensor.
template <class T>
struct Tensor {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(int n_, int c_, int h_, int w_, T fill = T{}) : n(n_), c(c_), h(h_), w(w_) {
    data.assign(static_cast<std::size_t>(n) * c * h * w, fill);
  }

  std::size_t plane() const noexcept { return static_cast<std::size_t>(h) * w; }
  std::size_t sample() const noexcept { return static_cast<std::size_t>(c) * plane(); }
  std::size_t size() const noexcept { return data.size(); }

  T& at(int in, int ic, int y, int x) noexcept {
    return data[((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x];
  }
  T at(int in, int ic, int y, int x) const noexcept {
    return data[((static_cast<std::size_t>(in) * c + ic) * h + y) * w + x];
  }
  T* sample_ptr(int in) noexcept { return data.data() + in * sample(); }
  const T* sample_ptr(int in) const noexcept { return data.data() + in * sample(); }

  bool same_shape(const Tensor& o) const noexcept {
    return n == o.n && c == o.c && h == o.h && w == o.w;
  }
};

enum class Mode { train, eval };

/// A named parameter or buffer. Buffers (batch-norm running statistics) are
/// saved with the model but never receive gradients.
template <class T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool trainable = true;
  std::string block;  // top-level block kind: "I" .. "V"

  std::size_t numel() const noexcept { return value.size(); }
};

template <class T>
class ParamStore {
 public:
  explicit ParamStore(std::uint64_t seed = 0) : rng_(seed) {}

  Param<T>& add(std::string name, std::vector<int> shape, bool trainable, std::string block,
                T fill = T{}) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    Param<T> p{std::move(name), std::move(shape), std::vector<T>(n, fill), {}, trainable,
               std::move(block)};
    if (trainable) p.grad.assign(n, T{});
    params_.push_back(std::move(p));
    return params_.back();
  }

  /// He-normal initialization for a weight with the given fan-in.
  void he_init(Param<T>& p, int fan_in) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / fan_in));
    for (T& v : p.value) v = static_cast<T>(dist(rng_));
  }

  void zero_grad() {
    for (auto& p : params_)
      if (p.trainable) std::fill(p.grad.begin(), p.grad.end(), T{});
  }

  std::deque<Param<T>>& params() noexcept { return params_; }
  const std::deque<Param<T>>& params() const noexcept { return params_; }

  Param<T>* find(const std::string& name) {
    for (auto& p : params_)
      if (p.name == name) return &p;
    return nullptr;
  }

  std::size_t trainable_count() const {
    std::size_t n = 0;
    for (const auto& p : params_)
      if (p.trainable) n += p.numel();
    return n;
  }

 private:
  std::deque<Param<T>> params_;
  std::mt19937_64 rng_;
};

template <class T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.n != b.n || a.h != b.h || a.w != b.w)
    fail(ErrorCode::shape_mismatch, "concat: spatial/batch mismatch");
  Tensor<T> out(a.n, a.c + b.c, a.h, a.w);
  for (int i = 0; i < a.n; ++i) {
    std::copy(a.sample_ptr(i), a.sample_ptr(i) + a.sample(), out.sample_ptr(i));
    std::copy(b.sample_ptr(i), b.sample_ptr(i) + b.sample(), out.sample_ptr(i) + a.sample());
  }
  return out;
}

/// Inverse of concat_channels for gradients: first `ca` channels, then the rest.
template <class T>
std::pair<Tensor<T>, Tensor<T>> split_channels(const Tensor<T>& g, int ca) {
  Tensor<T> a(g.n, ca, g.h, g.w), b(g.n, g.c - ca, g.h, g.w);
  for (int i = 0; i < g.n; ++i) {
    std::copy(g.sample_ptr(i), g.sample_ptr(i) + a.sample(), a.sample_ptr(i));
    std::copy(g.sample_ptr(i) + a.sample(), g.sample_ptr(i) + g.sample(), b.sample_ptr(i));
  }
  return {std::move(a), std::move(b)};
}

template <class T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) fail(ErrorCode::shape_mismatch, "add: shape mismatch");
  for (std::size_t i = 0; i < a.size(); ++i) a.data[i] += b.data[i];
}

}  // namespace svbr::nn
