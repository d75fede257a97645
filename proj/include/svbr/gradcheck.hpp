#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "svbr/network.hpp"

namespace svbr {

struct GradCheckEntry {
  std::string param;
  std::string block;
  std::size_t index;
  double analytic;
  double numeric;
  double rel_error;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::map<std::string, double> worst_by_block;  // block kind → max error
  std::vector<GradCheckEntry> entries;
  double loss = 0.0;

  void add(GradCheckEntry e) {
    if (e.rel_error > max_rel_error || entries.empty()) {
      max_rel_error = std::max(max_rel_error, e.rel_error);
      worst_param = e.param;
    }
    double& w = worst_by_block[e.block];
    w = std::max(w, e.rel_error);
    entries.push_back(std::move(e));
  }
};

/// |a − n| / max(|a|, |n|, floor). The floor keeps near-zero gradients from
/// turning rounding noise into large relative errors.
inline double gradient_relative_error(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

struct GradCheckOptions {
  double epsilon = 1e-5;
  std::size_t num_params = 200;
  std::uint64_t seed = 0;
  std::string corrupt_block;  // negative control: scale this block's analytic gradients by 1.5
};

/// Central-difference check of analytic gradients for `loss_fn` over the
/// trainable parameters in `store`. `loss_fn` must run a full forward pass;
/// `backprop_fn` must leave the analytic gradient in the store.
template <class T>
GradCheckReport check_parameter_gradients(nn::ParamStore<T>& store,
                                          const std::function<double()>& loss_fn,
                                          const std::function<void()>& backprop_fn,
                                          const GradCheckOptions& opt) {
  GradCheckReport report;
  store.zero_grad();
  report.loss = loss_fn();
  backprop_fn();

  std::vector<std::pair<nn::Param<T>*, std::size_t>> all;
  for (auto& p : store.params())
    if (p.trainable)
      for (std::size_t k = 0; k < p.numel(); ++k) all.emplace_back(&p, k);
  std::mt19937_64 rng(opt.seed);
  std::shuffle(all.begin(), all.end(), rng);
  if (opt.num_params > 0 && all.size() > opt.num_params) all.resize(opt.num_params);

  for (auto [p, k] : all) {
    const T saved = p->value[k];
    p->value[k] = static_cast<T>(saved + opt.epsilon);
    const double up = loss_fn();
    p->value[k] = static_cast<T>(saved - opt.epsilon);
    const double down = loss_fn();
    p->value[k] = saved;
    const double numeric = (up - down) / (2 * opt.epsilon);
    double analytic = static_cast<double>(p->grad[k]);
    if (!opt.corrupt_block.empty() && p->block == opt.corrupt_block) analytic *= 1.5;
    report.add({p->name, p->block, k, analytic, numeric, gradient_relative_error(analytic, numeric)});
  }
  return report;
}

/// Input batch for the full-network check.
struct GradCheckSample {
  Tensor<double> image;
  Tensor<double> map;
  Tensor<double> target;
};

inline GradCheckSample make_gradcheck_sample(int batch, int size, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  GradCheckSample s{Tensor<double>(batch, 3, size, size), Tensor<double>(batch, 1, size, size),
                    Tensor<double>(batch, 3, size, size)};
  for (double& v : s.image.data) v = 0.1 + 0.8 * u(rng);
  for (double& v : s.map.data) v = u(rng);
  for (double& v : s.target.data) v = 0.1 + 0.8 * u(rng);
  return s;
}

/// Full-network check of the SSIM loss gradient in train mode.
inline GradCheckReport gradient_check(Network<double>& net, const GradCheckSample& sample,
                                      const GradCheckOptions& opt = {}) {
  Tensor<double> grad;
  auto loss = [&] {
    return ssim_loss_with_grad(net.forward(sample.image, sample.map, Mode::train), sample.target,
                               static_cast<Tensor<double>*>(nullptr));
  };
  auto backprop = [&] {
    ssim_loss_with_grad(net.forward(sample.image, sample.map, Mode::train), sample.target, &grad);
    net.backward(grad);
  };
  return check_parameter_gradients<double>(net.params(), loss, backprop, opt);
}

/// Checks one block type in isolation under a fixed random linear loss
/// Σ r·y, covering every parameter and the block's input gradient (reported
/// under the name "input").
inline GradCheckReport gradient_check_block(nn::BlockKind kind, std::uint64_t seed,
                                            double epsilon = 1e-5) {
  using nn::BlockKind;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n01(0.0, 1.0);
  nn::ParamStore<double> store(seed + 1);
  const int c = 4, h = 8, w = 8, batch = 2;
  auto random_tensor = [&](int cc, int hh, int ww) {
    Tensor<double> t(batch, cc, hh, ww);
    for (double& v : t.data) v = n01(rng);
    return t;
  };

  Tensor<double> x, skip;
  std::function<Tensor<double>()> fwd;
  std::function<Tensor<double>(const Tensor<double>&)> bwd;  // returns d/dx
  nn::BlockI<double> b1;
  nn::BlockII<double> b2;
  nn::BlockIII<double> b3;
  nn::BlockIV<double> b4;
  nn::BlockV<double> b5;
  switch (kind) {
    case BlockKind::I:
      b1 = {store, "I", c, 2 * c};
      x = random_tensor(c, h, w);
      fwd = [&] { return b1.forward(x, Mode::train); };
      bwd = [&](const Tensor<double>& g) { return b1.backward(g); };
      break;
    case BlockKind::II:
      b2 = {store, "II", c};
      x = random_tensor(c, h, w);
      fwd = [&] { return b2.forward(x, Mode::train); };
      bwd = [&](const Tensor<double>& g) { return b2.backward(g); };
      break;
    case BlockKind::III:
      b3 = {store, "III", c};
      x = random_tensor(c, h, w);
      fwd = [&] { return b3.forward(x, Mode::train); };
      bwd = [&](const Tensor<double>& g) { return b3.backward(g); };
      break;
    case BlockKind::IV:
      b4 = {store, "IV", 2 * c, c};
      x = random_tensor(2 * c, h / 2, w / 2);
      skip = random_tensor(c, h, w);
      fwd = [&] { return b4.forward(x, skip, Mode::train); };
      bwd = [&](const Tensor<double>& g) { return b4.backward(g).first; };
      break;
    case BlockKind::V:
      b5 = {store, "V", c};
      x = random_tensor(c, h, w);
      skip = random_tensor(c, h, w);
      fwd = [&] { return b5.forward(x, skip); };
      bwd = [&](const Tensor<double>& g) { return b5.backward(g).first; };
      break;
  }

  const Tensor<double> probe = [&] {
    Tensor<double> y = fwd();
    for (double& v : y.data) v = n01(rng);
    return y;
  }();
  auto loss = [&] {
    const Tensor<double> y = fwd();
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += probe.data[i] * y.data[i];
    return s;
  };
  Tensor<double> gx;
  auto backprop = [&] {
    fwd();
    gx = bwd(probe);
  };
  GradCheckOptions opt;
  opt.epsilon = epsilon;
  opt.num_params = 0;
  opt.seed = seed;
  GradCheckReport report = check_parameter_gradients<double>(store, loss, backprop, opt);
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x.data[k];
    x.data[k] = saved + epsilon;
    const double up = loss();
    x.data[k] = saved - epsilon;
    const double down = loss();
    x.data[k] = saved;
    const double numeric = (up - down) / (2 * epsilon);
    report.add({"input", to_string(kind), k, gx.data[k], numeric,
                gradient_relative_error(gx.data[k], numeric)});
  }
  return report;
}

}  // namespace svbr
