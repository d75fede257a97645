// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <string>

#include "support.hpp"

using namespace svbr;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail += (detail.empty() ? "" : "; ") + std::string("failed: ") + what;
    }
  }
  void note(const char* fmt, double a, double b = 0, double c = 0, double d = 0) {
    char buf[256];
    std::snprintf(buf, sizeof buf, fmt, a, b, c, d);
    detail += (detail.empty() ? "" : "; ") + std::string(buf);
  }
};

int failures = 0;

void run(int id, const char* name, double budget_s, const std::function<void(Outcome&)>& body) {
  Outcome o;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(o);
  } catch (const std::exception& e) {
    o.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (budget_s > 0) o.require(secs < budget_s, "runtime budget");
  if (!o.pass) ++failures;
  std::printf("%s criterion %d: %s (%s; %.1fs)\n", o.pass ? "PASS" : "FAIL", id, name, o.detail.c_str(), secs);
  std::fflush(stdout);
}

double max_abs_diff(const ImageGrid& a, const ImageGrid& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.values()[i] - b.values()[i]));
  return m;
}

TrainingSample make_sample(const ImageGrid& sharp, const FieldPatternSpec& spec, int id) {
  TrainingSample s;
  s.id = std::to_string(id);
  s.sharp = sharp;
  s.field_true = generate_blur_field(spec, sharp.height(), sharp.width());
  s.blurry = sv_convolve(sharp, s.field_true);
  AugmentedVariants v = augment_or_fallback(s.field_true, s.blurry, {});
  s.field_matting = std::move(v.matting);
  s.field_dt = std::move(v.dt);
  return s;
}

double mean_last_epoch_loss(const TrainLog& log) {
  const int last = log.steps.back().epoch;
  double sum = 0;
  int n = 0;
  for (const auto& s : log.steps)
    if (s.epoch == last) {
      sum += s.loss;
      ++n;
    }
  return sum / n;
}

void kernels(Outcome& o) {
  const BlurScaleSet set = make_scale_set();
  double worst_sum = 0, worst_sym = 0, worst_oracle = 0;
  for (int i = 0; i < kNumScales; ++i) {
    const DiskKernel& k = scale_kernels()[static_cast<std::size_t>(i)];
    double sum = 0;
    for (double w : k.weights) sum += w;
    worst_sum = std::max(worst_sum, std::abs(sum - 1.0));
    const int h = k.half();
    for (int dy = -h; dy <= h; ++dy)
      for (int dx = -h; dx <= h; ++dx)
        worst_sym = std::max({worst_sym, std::abs(k.at(dy, dx) - k.at(-dy, dx)),
                              std::abs(k.at(dy, dx) - k.at(dy, -dx)), std::abs(k.at(dy, dx) - k.at(dx, dy))});
    const auto ref = oracle::disk_oracle(set[i], k.support);
    for (std::size_t j = 0; j < ref.size(); ++j) worst_oracle = std::max(worst_oracle, std::abs(k.weights[j] - ref[j]));
  }
  o.note("max |sum-1| %.2e, max asymmetry %.2e, max oracle diff %.2e", worst_sum, worst_sym, worst_oracle);
  o.require(worst_sum <= 1e-6, "normalization");
  o.require(worst_sym <= 1e-12, "symmetry");
  o.require(worst_oracle <= 1e-4, "oracle");
}

void convolution(Outcome& o) {
  const auto bank = default_pattern_bank();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> size(8, 64), pat(0, static_cast<int>(bank.size()) - 1), ch(0, 1);
  double worst = 0;
  bool partition = true;
  for (int t = 0; t < 20; ++t) {
    const int h = size(rng), w = size(rng), c = ch(rng) ? 3 : 1;
    const ImageGrid img = oracle::random_image(h, w, c, rng());
    const BlurField f = generate_blur_field(bank[static_cast<std::size_t>(pat(rng))], h, w);
    worst = std::max(worst, max_abs_diff(sv_convolve(img, f), sv_convolve_naive(img, f)));
    Grid<int> cover(h, w, 0);
    for (const auto& m : decompose_field(f))
      for (std::size_t i = 0; i < cover.size(); ++i) cover.data[i] += m.mask.data[i];
    for (int v : cover.data) partition = partition && v == 1;
  }
  o.note("20 cases, max |fast-naive| %.2e", worst);
  o.require(worst <= 1e-6, "fast vs naive");
  o.require(partition, "partition of unity");
}

void matting(Outcome& o) {
  double worst_solve = 0, worst_row = 0, min_quad = 1e300, worst_const = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ImageGrid img = oracle::random_image(8, 8, 3, 700 + seed);
    const SparseBlurMap s = oracle::random_sparse(8, 8, 800 + seed);
    MattingConfig cfg;
    cfg.cg_tol = 1e-13;
    cfg.cg_max_iters = 5000;
    Eigen::MatrixXd a = oracle::dense_laplacian(img, cfg.epsilon);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(64);
    for (int i = 0; i < 64; ++i)
      if (s.mask.data[static_cast<std::size_t>(i)]) {
        a(i, i) += cfg.lambda;
        b[i] = cfg.lambda * s.values.data[static_cast<std::size_t>(i)];
      }
    const Eigen::VectorXd x = a.ldlt().solve(b);
    const BlurField got = propagate_matting(s, img, cfg).field;
    for (int i = 0; i < 64; ++i)
      worst_solve = std::max(worst_solve, std::abs(got.radii.data[static_cast<std::size_t>(i)] - std::clamp(x[i], 0.0, kMaxRadius)));

    const SparseMatrix lap = matting_laplacian(img);
    const Eigen::MatrixXd dense(lap);
    worst_row = std::max(worst_row, (dense * Eigen::VectorXd::Ones(64)).cwiseAbs().maxCoeff());
    if (seed == 0) {
      std::mt19937_64 rng(900);
      std::normal_distribution<double> n01;
      for (int p = 0; p < 100; ++p) {
        Eigen::VectorXd v(64);
        for (long i = 0; i < 64; ++i) v[i] = n01(rng);
        min_quad = std::min(min_quad, v.dot(lap * v));
      }
    }
  }
  const ImageGrid scene = oracle::toy_scene(32, 32, 5);
  SparseBlurMap s = oracle::random_sparse(32, 32, 6, 0.1);
  for (double& v : s.values.data) v = 2.75;
  for (double v : propagate_matting(s, scene).field.radii.data) worst_const = std::max(worst_const, std::abs(v - 2.75));
  o.note("max |cg-direct| %.2e, max row sum %.2e, min probe %.2e, constant err %.2e", worst_solve, worst_row, min_quad,
         worst_const);
  o.require(worst_solve <= 1e-5, "dense solve");
  o.require(worst_row <= 1e-8, "row sums");
  o.require(min_quad >= -1e-8, "PSD probes");
  o.require(worst_const <= 1e-4, "constant propagation");
}

void domain(Outcome& o) {
  bool increasing = true;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const DomainTransforms dt = domain_transform(oracle::random_image(24, 32, 3, 40 + seed));
    for (int y = 0; y < 24; ++y)
      for (int x = 1; x < 32; ++x) increasing = increasing && dt.horizontal(y, x) > dt.horizontal(y, x - 1);
    for (int x = 0; x < 32; ++x)
      for (int y = 1; y < 24; ++y) increasing = increasing && dt.vertical(y, x) > dt.vertical(y - 1, x);
  }

  // Unit impulse on a constant guide; causal then anti-causal recursion with
  // unit spacing expanded by hand.
  const int n = 48, seed_at = 17;
  const DtConfig cfg;
  const double a = dt_feedback(cfg, 0);
  Grid<double> g(1, n, 0.0);
  g(0, seed_at) = 1.0;
  dt_horizontal_pass(g, domain_transform(ImageGrid(1, n, 3, 0.3), cfg), a);
  std::vector<double> y(n, 0.0);
  for (int j = seed_at; j < n; ++j) y[static_cast<std::size_t>(j)] = (1 - a) * std::pow(a, j - seed_at);
  double worst_closed = 0;
  for (int i = 0; i < n; ++i) {
    double z = std::pow(a, n - 1 - i) * y[n - 1];
    for (int j = i; j <= n - 2; ++j) z += (1 - a) * std::pow(a, j - i) * y[static_cast<std::size_t>(j)];
    worst_closed = std::max(worst_closed, std::abs(g(0, i) - z));
  }

  double worst_const = 0;
  const ImageGrid img = oracle::toy_scene(48, 40, 9);
  for (double density : {0.02, 0.3}) {
    SparseBlurMap s = oracle::random_sparse(48, 40, 10, density);
    for (double& v : s.values.data) v = 4.25;
    for (double v : propagate_dt(s, img).field.radii.data) worst_const = std::max(worst_const, std::abs(v - 4.25));
  }
  o.note("closed-form err %.2e, constant err %.2e", worst_closed, worst_const);
  o.require(increasing, "strictly increasing transform");
  o.require(worst_closed <= 1e-6, "closed-form recursion");
  o.require(worst_const <= 1e-4, "constant propagation");
}

void metrics(Outcome& o) {
  const ImageGrid x = oracle::random_image(32, 32, 3, 1);
  const double self = ssim(x, x).mean;
  double worst = 0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ImageGrid a = oracle::random_image(32, 32, 3, 110 + seed);
    const ImageGrid b = oracle::random_image(32, 32, 3, 150 + seed);
    const SsimResult r = ssim(a, b);
    for (int c = 0; c < 3; ++c)
      worst = std::max(worst, std::abs(r.per_channel[static_cast<std::size_t>(c)] - oracle::ssim_oracle(a, b, c)));
  }
  const double db = psnr(ImageGrid(8, 8, 3, 0.5), ImageGrid(8, 8, 3, 0.6));
  const std::vector<std::vector<double>> one{{1.0, 1.0, 0.4}};
  const std::vector<std::vector<double>> two{{0.8, 0.8, 0.8}, {0.6, 0.6, 0.6}};
  const double l1 = ssim_loss_from_scores(one), l2 = ssim_loss_from_scores(two);
  o.note("ssim(x,x)-1 %.2e, oracle diff %.2e, psnr %.9f dB", self - 1.0, worst, db);
  o.note("loss examples %.15g and %.15g", l1, l2);
  o.require(std::abs(self - 1.0) <= 1e-9, "identity");
  o.require(worst <= 1e-6, "oracle");
  o.require(std::abs(db - 20.0) <= 1e-6, "psnr");
  o.require(std::abs(l1 - 0.2) <= 1e-15 && std::abs(l2 - 0.3) <= 1e-15, "loss arithmetic");
}

void network(Outcome& o) {
  bool shapes_ok = true;
  for (int d = 1; d <= 4; ++d) {
    Network<float> net({d, 3}, 2);
    forward(net, oracle::toy_scene(32, 48, 3), BlurField(32, 48, 1.0));
    const auto& shapes = net.encoder_shapes();
    shapes_ok = shapes_ok && shapes.size() == static_cast<std::size_t>(2 * (d + 1));
    for (const auto& s : shapes)
      shapes_ok = shapes_ok && s.channels == 3 << s.level && s.height == 32 >> s.level && s.width == 48 >> s.level;
  }
  Network<double> tiny(NetworkConfig::tiny().randomized_output(), 7);
  const GradCheckReport r = gradient_check(tiny, make_gradcheck_sample(2, 16, 8));
  Network<float> net({2, 4}, 3);
  const ImageGrid img = oracle::toy_scene(32, 32, 4);
  const BlurField f(32, 32, 3.0);
  const bool deterministic = forward(net, img, f) == forward(net, img, f);
  o.note("gradcheck max rel err %.2e over %.0f params", r.max_rel_error, static_cast<double>(r.entries.size()));
  o.require(shapes_ok, "shape algebra");
  o.require(r.max_rel_error < 1e-3, "gradient check (" + r.worst_param + ")");
  o.require(deterministic, "eval determinism");
}

void training_smoke(Outcome& o) {
  const auto bank = default_pattern_bank();
  const ImageGrid scene = oracle::toy_scene(64, 64, 100);
  std::vector<TrainingSample> set;
  for (int i = 0; i < 4; ++i) set.push_back(make_sample(scene, bank[static_cast<std::size_t>(3 * i)], i));
  Network<float> net({2, 8}, 1);
  TrainConfig cfg;
  cfg.batch_size = 1;
  cfg.phase_a_epochs = 1000;
  cfg.phase_b_epochs = 0;
  cfg.max_steps = 200;
  const TrainResult r = train<float>(set, {}, net, cfg);
  const double first = r.log.steps.front().loss, last = mean_last_epoch_loss(r.log);
  o.note("%.0f steps, first loss %.4f, last-epoch loss %.4f", static_cast<double>(r.log.steps.size()), first, last);
  bool all_better = true;
  for (const auto& s : set) {
    const double before = ssim(s.blurry, s.sharp).mean, after = ssim(forward(net, s.blurry, s.field_true), s.sharp).mean;
    o.note("ssim %.4f -> %.4f", before, after);
    all_better = all_better && after > before;
  }
  o.require(!r.aborted, "training aborted");
  o.require(r.log.steps.size() == 200, "step count");
  o.require(last < 0.15, "loss below 0.15");
  o.require(all_better, "ssim improves on every sample");
}

struct Gains {
  double gt = 0, matting = 0, dt = 0;
  double lost_fraction() const { return (gt - 0.5 * (matting + dt)) / gt; }
};

Gains evaluate_gains(Network<float>& net, const std::vector<TrainingSample>& set) {
  Gains g;
  for (const auto& s : set) {
    const double base = ssim(s.blurry, s.sharp).mean;
    g.gt += ssim(forward(net, s.blurry, s.field_true), s.sharp).mean - base;
    g.matting += ssim(forward(net, s.blurry, s.field_matting), s.sharp).mean - base;
    g.dt += ssim(forward(net, s.blurry, s.field_dt), s.sharp).mean - base;
  }
  const double n = static_cast<double>(set.size());
  return {g.gt / n, g.matting / n, g.dt / n};
}

void robustness(Outcome& o) {
  const auto bank = default_pattern_bank();
  const ImageGrid scene = oracle::toy_scene(64, 64, 200);
  std::vector<TrainingSample> set;
  for (int i = 0; i < 6; ++i) set.push_back(make_sample(scene, bank[static_cast<std::size_t>((i * 5) % 39)], i));
  auto trained = [&](int a, int b) {
    Network<float> net(NetworkConfig{2, 8}, 1);
    TrainConfig cfg;
    cfg.batch_size = 1;
    cfg.phase_a_epochs = a;
    cfg.phase_b_epochs = b;
    cfg.seed = 3;
    train<float>(set, {}, net, cfg);
    return evaluate_gains(net, set);
  };
  const Gains ab = trained(10, 10), gt = trained(20, 0);
  o.note("phase-B net gains gt %.4f matting %.4f dt %.4f, lost %.3f", ab.gt, ab.matting, ab.dt, ab.lost_fraction());
  o.note("GT-only net gains gt %.4f matting %.4f dt %.4f, lost %.3f", gt.gt, gt.matting, gt.dt, gt.lost_fraction());
  o.require(ab.gt > 0 && gt.gt > 0, "positive gain with true maps");
  o.require(ab.lost_fraction() < 0.5, "phase-B net loses < 50%");
  o.require(gt.lost_fraction() > ab.lost_fraction(), "GT-only net loses more");
}

void baseline(Outcome& o) {
  const auto bank = default_pattern_bank();
  double gain = 0;
  const int n = 4;
  for (int i = 0; i < n; ++i) {
    const ImageGrid sharp = oracle::toy_scene(64, 64, 30 + static_cast<std::uint64_t>(i));
    const BlurField field = generate_blur_field(bank[static_cast<std::size_t>(10 * i + 1)], 64, 64);
    const ImageGrid blurry = sv_convolve(sharp, field);
    gain += psnr(sv_deconvolve_baseline(blurry, field), sharp) - psnr(blurry, sharp);
  }
  gain /= n;
  const ImageGrid img = oracle::random_image(16, 16, 3, 5);
  const double delta = max_abs_diff(richardson_lucy(img, make_disk_kernel(0.0), 1), img);
  o.note("mean psnr gain %.3f dB, delta-kernel diff %.2e", gain, delta);
  o.require(gain > 0.5, "psnr gain");
  o.require(delta <= 1e-15, "delta identity");
}

void formats(Outcome& o) {
  const std::string dir = oracle::scratch_dir("acceptance_formats");
  BlurField f(13, 21);
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<float> u(0.0f, 6.0f);
  for (double& v : f.radii.data) v = u(rng);
  io::write_field(dir + "/f.bmap", f);
  const bool bmap_ok = io::read_field(dir + "/f.bmap") == f;

  Network<float> net(NetworkConfig::tiny().randomized_output(), 8);
  io::save_checkpoint(dir + "/net.svbr", net);
  const auto back = io::load_checkpoint<float>(dir + "/net.svbr");
  const bool ckpt_ok = io::encode_checkpoint(*back) == io::read_file(dir + "/net.svbr");

  const io::Bytes good_map = io::encode_field(f);
  const io::Bytes good_net = io::encode_checkpoint(net);
  auto with = [](io::Bytes b, std::size_t at, std::uint8_t v) {
    b[at] = v;
    return b;
  };
  const bool codes_ok =
      oracle::error_code_of([&] { io::decode_field(with(good_map, 0, 'X')); }) == ErrorCode::bad_magic &&
      oracle::error_code_of([&] { io::decode_field(with(good_map, 4, 2)); }) == ErrorCode::bad_version &&
      oracle::error_code_of([&] { io::decode_field(io::Bytes(good_map.begin(), good_map.end() - 3)); }) ==
          ErrorCode::truncated &&
      oracle::error_code_of([&] { io::decode_checkpoint<float>(with(good_net, 1, 'X')); }) == ErrorCode::bad_magic &&
      oracle::error_code_of([&] { io::decode_checkpoint<float>(with(good_net, 4, 9)); }) == ErrorCode::bad_version &&
      oracle::error_code_of([&] { io::decode_checkpoint<float>(io::Bytes(good_net.begin(), good_net.end() - 10)); }) ==
          ErrorCode::truncated;

  const std::vector<NamedImage> images{{"alpha", oracle::toy_scene(32, 32, 1)}, {"beta", oracle::toy_scene(32, 32, 2)}};
  SynthesisOptions opt;
  opt.seed = 17;
  opt.patterns_per_image = 4;
  std::uint32_t crc[2];
  for (int k = 0; k < 2; ++k) {
    const std::string out = dir + "/synth" + std::to_string(k);
    auto records = synthesize_dataset(images, default_pattern_bank(), opt, out);
    split(records, 0.8, opt.seed);
    crc[k] = write_manifest(out, records);
  }
  bool files_equal = true;
  for (const auto& e : fs::recursive_directory_iterator(dir + "/synth0"))
    if (e.is_regular_file()) {
      const fs::path twin = fs::path(dir + "/synth1") / fs::relative(e.path(), dir + "/synth0");
      files_equal = files_equal && fs::exists(twin) && io::read_file(e.path().string()) == io::read_file(twin.string());
    }
  char crc_text[64];
  std::snprintf(crc_text, sizeof crc_text, "manifest crc32 %08x vs %08x", crc[0], crc[1]);
  o.detail += std::string(o.detail.empty() ? "" : "; ") + crc_text;
  o.require(bmap_ok, "blur map round trip");
  o.require(ckpt_ok, "checkpoint round trip");
  o.require(codes_ok, "error codes");
  o.require(crc[0] == crc[1] && files_equal, "deterministic synthesis");
}

}  // namespace

int main() {
  run(1, "kernel suite", 5, kernels);
  run(2, "convolution oracle equivalence", 60, convolution);
  run(3, "matting solver", 30, matting);
  run(4, "domain transform", 10, domain);
  run(5, "metrics", 0, metrics);
  run(6, "network shapes, gradients, determinism", 300, network);
  run(7, "training smoke", 600, training_smoke);
  run(8, "augmentation robustness", 1200, robustness);
  run(9, "deconvolution baseline", 0, baseline);
  run(10, "formats and determinism", 0, formats);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
