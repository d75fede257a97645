#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "svbr/svbr.hpp"

namespace fs = std::filesystem;
using namespace svbr;

namespace {

enum Exit { ok = 0, verification = 1, input = 2, io_error = 3, numerical = 4 };

int exit_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::io: return io_error;
    case ErrorCode::numerical: return numerical;
    default: return input;
  }
}

int worker_count() {
  if (const char* env = std::getenv("SVBR_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

std::vector<fs::path> sorted_files(const std::string& dir, bool (*keep)(const std::string&)) {
  if (!fs::is_directory(dir)) fail(ErrorCode::domain, "not a directory: " + dir);
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && keep(io::lower_extension(e.path().string()))) out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

bool is_bmap(const std::string& ext) { return ext == ".bmap"; }

/// BMAP, or a grayscale raster read as radius = 6·gray.
BlurField read_blur_map(const std::string& path) {
  if (io::lower_extension(path) == ".bmap") return io::read_field(path);
  const ImageGrid img = io::read_image(path);
  const Grid<double> gray = luminance(img);
  BlurField f(img.height(), img.width());
  for (std::size_t i = 0; i < f.radii.size(); ++i) f.radii.data[i] = kMaxRadius * std::clamp(gray.data[i], 0.0, 1.0);
  return f;
}

// ---------------------------------------------------------------------------

struct SynthArgs {
  std::string input_dir, out;
  int height = 256, width = 256, patterns = 39;
  std::uint64_t seed = 0;
  double noise_sigma = 0.0, split_ratio = 0.8;
};

int cmd_synth(const SynthArgs& a) {
  if (!fs::is_directory(a.input_dir)) {
    std::fprintf(stderr, "error: input directory not found: %s\n", a.input_dir.c_str());
    return input;
  }
  if (a.height % 16 || a.width % 16)
    std::fprintf(stderr, "warning: %dx%d is not divisible by 16 (depth-4 networks need multiples of 16)\n",
                 a.height, a.width);
  const IngestResult in = ingest(a.input_dir, a.height, a.width);
  for (const auto& w : in.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());

  SynthesisOptions opt;
  opt.patterns_per_image = a.patterns;
  opt.seed = a.seed;
  opt.threads = worker_count();
  if (a.noise_sigma > 0) opt.noise = {NoiseKind::gaussian, a.noise_sigma, 0};
  std::vector<SampleRecord> records = synthesize_dataset(in.images, default_pattern_bank(), opt, a.out);
  if (in.images.size() >= 2) split(records, a.split_ratio, a.seed);
  else std::fprintf(stderr, "warning: one source image, every record stays in the train split\n");
  const std::uint32_t crc = write_manifest(a.out, records);
  std::printf("%zu records written\n", records.size());
  std::printf("manifest crc32 %08x\n", crc);
  return ok;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string dataset, checkpoint_out = "svbr.ckpt", log_out;
  int depth = 4, base_width = 32;
  TrainConfig cfg;
};

int cmd_train(const TrainArgs& a) {
  std::vector<SampleRecord> records;
  try {
    records = read_manifest(a.dataset);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: invalid dataset: %s\n", e.what());
    return input;
  }
  const auto train_set = load_samples(a.dataset, records, Split::train);
  const auto val_set = load_samples(a.dataset, records, Split::val);
  if (train_set.empty()) {
    std::fprintf(stderr, "error: dataset has no training records\n");
    return input;
  }
  Network<float> net({a.depth, a.base_width}, a.cfg.seed);
  const TrainResult r = train<float>(train_set, val_set, net, a.cfg);
  if (!a.log_out.empty()) io::write_file(a.log_out, [&] {
    const std::string t = r.log.to_text();
    return io::Bytes(t.begin(), t.end());
  }());
  if (r.aborted) {
    std::fprintf(stderr, "error: %s\n", r.diagnostic.c_str());
    return numerical;
  }
  io::save_checkpoint(a.checkpoint_out, net);
  if (!r.log.steps.empty())
    std::printf("steps %zu  first loss %.6f  last loss %.6f  best val loss %.6f\n", r.log.steps.size(),
                r.log.steps.front().loss, r.log.steps.back().loss, r.best_val_loss);
  std::printf("checkpoint written to %s\n", a.checkpoint_out.c_str());
  return ok;
}

// ---------------------------------------------------------------------------

struct DeblurArgs {
  std::string image, blur_map, checkpoint, out;
  bool baseline = false;
  int iterations = kDefaultRlIterations;
};

int cmd_deblur(const DeblurArgs& a) {
  const ImageGrid img = to_rgb(io::read_image(a.image));
  const BlurField field = read_blur_map(a.blur_map);
  if (img.height() != field.height() || img.width() != field.width()) {
    std::fprintf(stderr, "error: image is %dx%d but blur map is %dx%d\n", img.height(), img.width(),
                 field.height(), field.width());
    return input;
  }
  ImageGrid out;
  if (a.baseline) {
    out = sv_deconvolve_baseline(img, field, a.iterations);
  } else {
    if (a.checkpoint.empty()) {
      std::fprintf(stderr, "error: --checkpoint is required unless --baseline is given\n");
      return input;
    }
    std::unique_ptr<Network<float>> net;
    try {
      net = io::load_checkpoint<float>(a.checkpoint);
    } catch (const Error& e) {
      std::fprintf(stderr, "error: bad checkpoint: %s\n", e.what());
      return io_error;
    }
    out = forward(*net, img, field);
  }
  io::write_image(a.out, out, 16);
  std::printf("wrote %s (%dx%d)\n", a.out.c_str(), out.height(), out.width());
  return ok;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string pred_dir, gt_dir, map_pred, map_gt, report;
};

int cmd_eval(const EvalArgs& a) {
  std::string text;
  char line[512];
  auto counterpart = [](const std::string& dir, const fs::path& f) {
    const fs::path p = fs::path(dir) / f.filename();
    if (!fs::exists(p)) fail(ErrorCode::domain, "missing counterpart " + p.string());
    return p.string();
  };

  const auto preds = sorted_files(a.pred_dir, io::is_image_extension);
  double ssim_sum = 0, psnr_sum = 0;
  for (const auto& p : preds) {
    const ImageGrid pred = io::read_image(p.string());
    const ImageGrid gt = io::read_image(counterpart(a.gt_dir, p));
    const double s = ssim(pred, gt).mean, db = capped_psnr(psnr(pred, gt));
    ssim_sum += s;
    psnr_sum += db;
    std::snprintf(line, sizeof line, "image=%s ssim=%.4f psnr=%.2f ssim/psnr=%s\n", p.filename().c_str(), s,
                  db, format_ssim_psnr(s, db).c_str());
    text += line;
  }
  if (!preds.empty()) {
    const double n = static_cast<double>(preds.size());
    std::snprintf(line, sizeof line, "mean images=%zu ssim=%.4f psnr=%.2f ssim/psnr=%s\n", preds.size(),
                  ssim_sum / n, psnr_sum / n, format_ssim_psnr(ssim_sum / n, psnr_sum / n).c_str());
    text += line;
  }

  if (!a.map_pred.empty() || !a.map_gt.empty()) {
    if (a.map_pred.empty() || a.map_gt.empty()) fail(ErrorCode::domain, "--map-pred and --map-gt go together");
    const auto maps = sorted_files(a.map_pred, is_bmap);
    double mae_sum = 0;
    for (const auto& p : maps) {
      const double m = mae_blur(io::read_field(p.string()), io::read_field(counterpart(a.map_gt, p)));
      mae_sum += m;
      std::snprintf(line, sizeof line, "map=%s mae=%.3f\n", p.filename().c_str(), m);
      text += line;
    }
    if (!maps.empty()) {
      std::snprintf(line, sizeof line, "mean maps=%zu mae=%.3f\n", maps.size(), mae_sum / static_cast<double>(maps.size()));
      text += line;
    }
  }
  if (preds.empty() && text.empty()) fail(ErrorCode::domain, "no images found in " + a.pred_dir);
  if (a.report.empty()) std::fputs(text.c_str(), stdout);
  else io::write_file(a.report, io::Bytes(text.begin(), text.end()));
  return ok;
}

// ---------------------------------------------------------------------------

struct GradcheckArgs {
  std::uint64_t seed = 0;
  std::string corrupt_block;
};

int cmd_gradcheck(const GradcheckArgs& a) {
  constexpr double kTolerance = 1e-3;
  Network<double> net(NetworkConfig::tiny().randomized_output(), a.seed);
  GradCheckOptions opt;
  opt.seed = a.seed;
  opt.corrupt_block = a.corrupt_block;
  const GradCheckReport r = gradient_check(net, make_gradcheck_sample(2, 16, a.seed + 1), opt);

  std::printf("block  network      isolated\n");
  double worst_isolated = 0;
  std::string worst_isolated_block;
  for (auto kind : {nn::BlockKind::I, nn::BlockKind::II, nn::BlockKind::III, nn::BlockKind::IV, nn::BlockKind::V}) {
    const std::string name = nn::to_string(kind);
    const GradCheckReport b = gradient_check_block(kind, a.seed);
    const auto it = r.worst_by_block.find(name);
    std::printf("%-5s  %.3e    %.3e\n", name.c_str(), it == r.worst_by_block.end() ? 0.0 : it->second,
                b.max_rel_error);
    if (b.max_rel_error > worst_isolated) {
      worst_isolated = b.max_rel_error;
      worst_isolated_block = name;
    }
  }
  std::printf("checked %zu parameters, loss %.9f\n", r.entries.size(), r.loss);
  std::printf("max relative error %.3e (%s)\n", r.max_rel_error, r.worst_param.c_str());
  if (r.max_rel_error >= kTolerance) {
    std::string block;
    for (const auto& e : r.entries)
      if (e.param == r.worst_param) block = e.block;
    std::printf("FAIL: gradient mismatch in %s (block %s)\n", r.worst_param.c_str(), block.c_str());
    return verification;
  }
  if (worst_isolated >= kTolerance) {
    std::printf("FAIL: isolated check of block %s\n", worst_isolated_block.c_str());
    return verification;
  }
  std::printf("PASS\n");
  return ok;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatially-varying defocus blur synthesis and restoration toolkit"};
  app.require_subcommand(1);

  SynthArgs sa;
  auto* synth = app.add_subcommand("synth", "Synthesize a blurred dataset from sharp images");
  synth->add_option("--input-dir", sa.input_dir, "Directory of sharp images")->required();
  synth->add_option("--out", sa.out, "Output dataset directory")->required();
  synth->add_option("--height", sa.height, "Target height")->check(CLI::PositiveNumber);
  synth->add_option("--width", sa.width, "Target width")->check(CLI::PositiveNumber);
  synth->add_option("--patterns", sa.patterns, "Bank patterns per image")->check(CLI::Range(1, 39));
  synth->add_option("--seed", sa.seed, "Seed");
  synth->add_option("--noise-sigma", sa.noise_sigma, "Gaussian noise sigma")->check(CLI::NonNegativeNumber);
  synth->add_option("--split-ratio", sa.split_ratio, "Train fraction of source images")->check(CLI::Range(0.0, 1.0));

  TrainArgs ta;
  auto* trn = app.add_subcommand("train", "Train a network on a synthesized dataset");
  trn->add_option("--dataset", ta.dataset, "Dataset directory")->required();
  trn->add_option("--depth", ta.depth, "Downsampling levels")->check(CLI::Range(1, 8));
  trn->add_option("--base-width", ta.base_width, "Channels at full resolution")->check(CLI::PositiveNumber);
  trn->add_option("--batch-size", ta.cfg.batch_size, "Batch size")->check(CLI::PositiveNumber);
  trn->add_option("--phase-a", ta.cfg.phase_a_epochs, "Epochs on true blur fields")->check(CLI::NonNegativeNumber);
  trn->add_option("--phase-b", ta.cfg.phase_b_epochs, "Epochs on augmented blur fields")->check(CLI::NonNegativeNumber);
  trn->add_option("--lr", ta.cfg.lr0, "Initial learning rate")->check(CLI::PositiveNumber);
  trn->add_option("--lr-drop-every", ta.cfg.lr_drop_every, "Epochs between drops")->check(CLI::PositiveNumber);
  trn->add_option("--max-steps", ta.cfg.max_steps, "Stop after this many steps (0: no cap)")->check(CLI::NonNegativeNumber);
  trn->add_option("--seed", ta.cfg.seed, "Seed");
  trn->add_option("--checkpoint-out", ta.checkpoint_out, "Checkpoint path");
  trn->add_option("--log-out", ta.log_out, "Training log path");

  DeblurArgs da;
  auto* dbl = app.add_subcommand("deblur", "Deblur one image given its blur map");
  dbl->add_option("--image", da.image, "Blurry image")->required();
  dbl->add_option("--blur-map", da.blur_map, "BMAP file or 8-bit grayscale map (255 = radius 6)")->required();
  dbl->add_option("--checkpoint", da.checkpoint, "Network checkpoint");
  dbl->add_option("--out", da.out, "Output image")->required();
  dbl->add_flag("--baseline", da.baseline, "Use per-scale Richardson-Lucy instead of the network");
  dbl->add_option("--iterations", da.iterations, "Richardson-Lucy iterations")->check(CLI::PositiveNumber);

  EvalArgs ea;
  auto* ev = app.add_subcommand("eval", "Score predictions against ground truth");
  ev->add_option("--pred-dir", ea.pred_dir, "Predicted images")->required();
  ev->add_option("--gt-dir", ea.gt_dir, "Ground-truth images")->required();
  ev->add_option("--map-pred", ea.map_pred, "Predicted blur maps (BMAP)");
  ev->add_option("--map-gt", ea.map_gt, "Ground-truth blur maps (BMAP)");
  ev->add_option("--report", ea.report, "Report path (stdout when omitted)");

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient check on the tiny network");
  gc->add_option("--seed", ga.seed, "Seed");
  gc->add_option("--corrupt-block", ga.corrupt_block, "Debug: perturb one block's analytic gradients")
      ->check(CLI::IsMember({"I", "II", "III", "IV", "V"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? ok : input;
  }

  try {
    if (*synth) return cmd_synth(sa);
    if (*trn) return cmd_train(ta);
    if (*dbl) return cmd_deblur(da);
    if (*ev) return cmd_eval(ea);
    if (*gc) return cmd_gradcheck(ga);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_for(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return io_error;
  }
  return ok;
}
