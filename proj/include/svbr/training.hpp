#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "svbr/io/checkpoint.hpp"
#include "svbr/metrics.hpp"
#include "svbr/network.hpp"

namespace svbr {

struct TrainConfig {
  int batch_size = 8;
  double lr0 = 1e-3;
  int lr_drop_every = 20;  // epochs
  double lr_drop_factor = 10.0;
  int phase_a_epochs = 32;
  int phase_b_epochs = 32;
  std::uint64_t seed = 0;
  double split_ratio = 0.8;
  int max_steps = 0;  // 0: no cap

  void validate() const {
    if (batch_size < 1 || !(lr0 > 0) || lr_drop_every < 1 || !(lr_drop_factor > 0) ||
        phase_a_epochs < 0 || phase_b_epochs < 0 || !(split_ratio > 0 && split_ratio < 1) ||
        max_steps < 0)
      fail(ErrorCode::domain, "TrainConfig: invalid values");
  }
};

/// lr0 / factor^⌊epoch / every⌋. Epochs count across both phases.
inline double lr_schedule(const TrainConfig& cfg, int epoch) {
  if (epoch < 0) fail(ErrorCode::domain, "lr_schedule: negative epoch");
  return cfg.lr0 / std::pow(cfg.lr_drop_factor, epoch / cfg.lr_drop_every);
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Moment estimates for one parameter tensor.
struct AdamMoments {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

/// One bias-corrected Adam update of `params` in place.
template <class T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamMoments& state, double lr,
               const AdamConfig& cfg = {}) {
  if (params.size() != grads.size()) fail(ErrorCode::shape_mismatch, "adam_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  if (state.m.size() != params.size()) fail(ErrorCode::shape_mismatch, "adam_step: state size mismatch");
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = cfg.beta1 * state.m[i] + (1 - cfg.beta1) * g;
    state.v[i] = cfg.beta2 * state.v[i] + (1 - cfg.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] = static_cast<T>(params[i] - lr * mhat / (std::sqrt(vhat) + cfg.epsilon));
  }
}

/// Adam over every trainable tensor of a store.
template <class T>
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(nn::ParamStore<T>& store, double lr) {
    std::size_t k = 0;
    for (auto& p : store.params()) {
      if (!p.trainable) continue;
      if (k == moments_.size()) moments_.emplace_back();
      adam_step<T>(std::span<T>(p.value), std::span<const T>(p.grad), moments_[k++], lr, cfg_);
    }
  }
  const std::vector<AdamMoments>& moments() const noexcept { return moments_; }

 private:
  AdamConfig cfg_;
  std::vector<AdamMoments> moments_;
};

enum class MapVariant { truth, matting, dt };

inline const char* to_string(MapVariant v) {
  switch (v) {
    case MapVariant::truth: return "true";
    case MapVariant::matting: return "matting";
    case MapVariant::dt: return "dt";
  }
  return "?";
}

/// One training example held in memory.
struct TrainingSample {
  std::string id;
  ImageGrid sharp;
  ImageGrid blurry;
  BlurField field_true;
  BlurField field_matting;
  BlurField field_dt;

  const BlurField& field(MapVariant v) const {
    switch (v) {
      case MapVariant::matting: return field_matting;
      case MapVariant::dt: return field_dt;
      case MapVariant::truth: break;
    }
    return field_true;
  }
};

struct StepRecord {
  long step;
  int epoch;
  char phase;  // 'A' or 'B'
  double lr;
  double loss;
  std::vector<MapVariant> variants;  // map used by each sample of the batch
};

struct EpochRecord {
  int epoch;
  char phase;
  std::vector<int> permutation;
  double val_loss;
};

struct TrainLog {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;

  /// Line-delimited step records.
  std::string to_text() const {
    std::string out;
    char buf[160];
    for (const auto& s : steps) {
      std::snprintf(buf, sizeof buf, "step=%ld epoch=%d phase=%c lr=%.9g loss=%.9g\n", s.step, s.epoch,
                    s.phase, s.lr, s.loss);
      out += buf;
    }
    for (const auto& e : epochs) {
      std::snprintf(buf, sizeof buf, "epoch=%d phase=%c val_loss=%.9g permutation=", e.epoch, e.phase,
                    e.val_loss);
      out += buf;
      for (std::size_t i = 0; i < e.permutation.size(); ++i)
        out += (i ? "," : "") + std::to_string(e.permutation[i]);
      out += "\n";
    }
    return out;
  }
};

struct TrainResult {
  TrainLog log;
  io::Bytes best_checkpoint;
  double best_val_loss = 0.0;
  bool aborted = false;
  std::string diagnostic;
};

namespace detail {

inline std::vector<int> seeded_permutation(int n, std::mt19937_64& rng) {
  std::vector<int> p(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) p[static_cast<std::size_t>(i)] = i;
  for (int i = n - 1; i > 0; --i)
    std::swap(p[static_cast<std::size_t>(i)], p[rng() % static_cast<std::uint64_t>(i + 1)]);
  return p;
}

template <class T>
double batch_loss(Network<T>& net, std::span<const TrainingSample* const> batch,
                  std::span<const MapVariant> variants, Mode mode, Tensor<T>* grad) {
  std::vector<const ImageGrid*> imgs;
  std::vector<const BlurField*> maps;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    imgs.push_back(&batch[i]->blurry);
    maps.push_back(&batch[i]->field(variants[i]));
  }
  auto [x, m] = make_inputs<T>(imgs, maps);
  Tensor<T> target(x.n, 3, x.h, x.w);
  for (int i = 0; i < x.n; ++i)
    for (std::size_t k = 0; k < target.sample(); ++k)
      target.sample_ptr(i)[k] = static_cast<T>(batch[static_cast<std::size_t>(i)]->sharp.values()[k]);
  return ssim_loss_with_grad(net.forward(x, m, mode), target, grad);
}

}  // namespace detail

/// Mean eval-mode loss over `samples`, one sample per pass.
template <class T>
double validation_loss(Network<T>& net, std::span<const TrainingSample> samples,
                       std::span<const MapVariant> variants) {
  double total = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const TrainingSample* s = &samples[i];
    total += detail::batch_loss(net, std::span(&s, 1), variants.subspan(i, 1), Mode::eval,
                                static_cast<Tensor<T>*>(nullptr));
  }
  return total / static_cast<double>(samples.size());
}

/// Two-phase training. Phase A feeds the true blur fields; phase B picks the
/// matting or the domain-transform variant per sample and epoch. The
/// optimizer state is reset at the phase boundary while the learning-rate
/// schedule keeps counting epochs. Validation runs after every epoch (on the
/// training set when `val` is empty); on return `net` holds the parameters
/// of the best validation epoch of the last phase that ran.
template <class T>
TrainResult train(std::span<const TrainingSample> train_set, std::span<const TrainingSample> val,
                  Network<T>& net, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.empty()) fail(ErrorCode::domain, "train: empty dataset");
  if (val.empty()) val = train_set;

  TrainResult result;
  std::mt19937_64 rng(cfg.seed);
  long step = 0;
  const int n = static_cast<int>(train_set.size());
  int epoch = 0;

  for (char phase : {'A', 'B'}) {
    const int epochs = phase == 'A' ? cfg.phase_a_epochs : cfg.phase_b_epochs;
    if (epochs == 0) continue;
    Adam<T> opt;
    std::optional<double> best;
    std::vector<MapVariant> val_variants(val.size(), MapVariant::truth);
    if (phase == 'B')
      for (std::size_t i = 0; i < val.size(); ++i)
        val_variants[i] = i % 2 ? MapVariant::dt : MapVariant::matting;

    for (int e = 0; e < epochs; ++e, ++epoch) {
      if (cfg.max_steps && step >= cfg.max_steps) break;
      const double lr = lr_schedule(cfg, epoch);
      EpochRecord rec{epoch, phase, detail::seeded_permutation(n, rng), 0.0};
      std::vector<MapVariant> choice(static_cast<std::size_t>(n), MapVariant::truth);
      if (phase == 'B')
        for (auto& c : choice) c = (rng() & 1) ? MapVariant::dt : MapVariant::matting;

      for (int start = 0; start < n; start += cfg.batch_size) {
        if (cfg.max_steps && step >= cfg.max_steps) break;
        std::vector<const TrainingSample*> batch;
        std::vector<MapVariant> variants;
        for (int i = start; i < std::min(n, start + cfg.batch_size); ++i) {
          const int idx = rec.permutation[static_cast<std::size_t>(i)];
          batch.push_back(&train_set[static_cast<std::size_t>(idx)]);
          variants.push_back(choice[static_cast<std::size_t>(idx)]);
        }
        net.zero_grad();
        Tensor<T> grad;
        const double loss = detail::batch_loss(net, batch, variants, Mode::train, &grad);
        ++step;
        result.log.steps.push_back({step, epoch, phase, lr, loss, variants});
        if (!std::isfinite(loss)) {
          result.aborted = true;
          result.diagnostic = "non-finite loss at step " + std::to_string(step) + " (epoch " +
                              std::to_string(epoch) + ", phase " + phase + ")";
          return result;
        }
        net.backward(grad);
        opt.step(net.params(), lr);
      }
      rec.val_loss = validation_loss<T>(net, val, val_variants);
      result.log.epochs.push_back(rec);
      if (!best || rec.val_loss < *best) {
        best = rec.val_loss;
        result.best_val_loss = rec.val_loss;
        result.best_checkpoint = io::encode_checkpoint(net);
      }
    }
  }
  if (!result.best_checkpoint.empty()) {
    auto restored = io::decode_checkpoint<T>(result.best_checkpoint);
    auto& dst = net.params().params();
    auto& src = restored->params().params();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i].value = src[i].value;
  }
  return result;
}

}  // namespace svbr
