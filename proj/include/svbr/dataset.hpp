#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "svbr/augmentation.hpp"
#include "svbr/io/bmap.hpp"
#include "svbr/io/raster.hpp"
#include "svbr/synthesis.hpp"
#include "svbr/training.hpp"

namespace svbr {

namespace fs = std::filesystem;

struct NamedImage {
  std::string id;
  ImageGrid image;
};

struct IngestResult {
  std::vector<NamedImage> images;
  std::vector<std::string> warnings;
};

/// Bilinear resampling with pixel-center alignment and edge clamping.
inline ImageGrid resize_bilinear(const ImageGrid& src, int height, int width) {
  if (height < 1 || width < 1) fail(ErrorCode::domain, "resize_bilinear: bad target size");
  if (src.height() == height && src.width() == width) return src;
  ImageGrid out(height, width, src.channels());
  const double sy = static_cast<double>(src.height()) / height;
  const double sx = static_cast<double>(src.width()) / width;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, src.height() - 1.0);
    const int y0 = static_cast<int>(fy), y1 = std::min(y0 + 1, src.height() - 1);
    const double ty = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, src.width() - 1.0);
      const int x0 = static_cast<int>(fx), x1 = std::min(x0 + 1, src.width() - 1);
      const double tx = fx - x0;
      for (int c = 0; c < src.channels(); ++c) {
        const double top = src.at(c, y0, x0) * (1 - tx) + src.at(c, y0, x1) * tx;
        const double bot = src.at(c, y1, x0) * (1 - tx) + src.at(c, y1, x1) * tx;
        out.at(c, y, x) = top * (1 - ty) + bot * ty;
      }
    }
  }
  return out;
}

inline std::string sanitize_id(std::string s) {
  for (char& c : s)
    if (std::isspace(static_cast<unsigned char>(c)) || c == '=') c = '_';
  return s;
}

/// Loads every decodable raster in `dir` (sorted by name), converts to RGB,
/// rescales to height×width and normalizes to [0,1]. Ids are filename
/// stems. Undecodable files are skipped with a warning.
inline IngestResult ingest(const std::string& dir, int height, int width) {
  if (!fs::is_directory(dir)) fail(ErrorCode::io, "ingest: not a directory: " + dir);
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file()) files.push_back(e.path());
  std::sort(files.begin(), files.end());
  IngestResult r;
  for (const auto& f : files) {
    try {
      ImageGrid img = to_rgb(io::read_image(f.string()));
      img = resize_bilinear(img, height, width);
      img.clamp(0.0, 1.0);
      r.images.push_back({sanitize_id(f.stem().string()), std::move(img)});
    } catch (const Error& e) {
      r.warnings.push_back("skipping " + f.filename().string() + ": " + e.what());
    }
  }
  if (r.images.empty()) fail(ErrorCode::domain, "ingest: no decodable images in " + dir);
  return r;
}

enum class Split { train, val };

/// One synthesized sample. Paths are relative to the dataset directory; each
/// file carries a CRC-32 checked on load.
struct SampleRecord {
  std::string id;
  std::string source;
  std::string sharp, blurry, field_true, field_matting, field_dt;
  int pattern_id = 0;
  std::uint64_t seed = 0;
  Split split = Split::train;
  std::uint32_t crc_sharp = 0, crc_blurry = 0, crc_true = 0, crc_matting = 0, crc_dt = 0;

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct SynthesisOptions {
  int patterns_per_image = 39;
  MattingConfig matting;
  DtConfig dt;
  EdgeConfig edges;
  NoiseConfig noise;  // seed is replaced by the per-record seed
  std::uint64_t seed = 0;
  int threads = 1;
};

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline BlurField round_to_float(BlurField f) {
  for (double& r : f.radii.data) r = static_cast<double>(static_cast<float>(r));
  return f;
}

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const int t = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  std::vector<std::thread> pool;
  for (int k = 1; k < t; ++k) pool.emplace_back(worker);
  worker();
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// make_augmented_variants for dataset synthesis. Heavy blur can leave an
/// image without edges at the configured thresholds; the thresholds are then
/// halved up to four times, and an image that still has none keeps the true
/// field for both variants.
inline AugmentedVariants augment_or_fallback(const BlurField& truth, const ImageGrid& blurry,
                                             const SynthesisOptions& opt) {
  EdgeConfig e = opt.edges;
  for (int attempt = 0; attempt < 5; ++attempt, e.low /= 2, e.high /= 2) {
    try {
      return make_augmented_variants(truth, blurry, opt.matting, opt.dt, e);
    } catch (const Error& err) {
      if (err.code() != ErrorCode::no_constraints) throw;
    }
  }
  return {truth, truth, Mask(truth.height(), truth.width(), 0), true};
}

/// Pairs each image with `patterns_per_image` bank patterns, round-robin
/// from a seeded offset, and writes for every pair:
///   sharp/<source>.pfm, blurry/<id>.pfm,
///   fields/<id>_true.bmap, fields/<id>_matting.bmap, fields/<id>_dt.bmap.
/// The augmented maps keep the true radii on edges of the blurry image and
/// propagate them with matting and domain-transform interpolation.
/// All records start in the train split.
inline std::vector<SampleRecord> synthesize_dataset(const std::vector<NamedImage>& images,
                                                    const std::vector<FieldPatternSpec>& bank,
                                                    const SynthesisOptions& opt,
                                                    const std::string& out_dir) {
  if (images.empty()) fail(ErrorCode::domain, "synthesize_dataset: no images");
  if (bank.empty()) fail(ErrorCode::domain, "synthesize_dataset: empty pattern bank");
  const int per_image = std::clamp(opt.patterns_per_image, 1, static_cast<int>(bank.size()));
  const int bank_size = static_cast<int>(bank.size());
  std::error_code ec;
  for (const char* sub : {"sharp", "blurry", "fields"}) {
    fs::create_directories(fs::path(out_dir) / sub, ec);
    if (ec) fail(ErrorCode::io, "cannot create " + (fs::path(out_dir) / sub).string());
  }

  std::vector<std::uint32_t> sharp_crc(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    const io::Bytes b = io::encode_image(images[i].image, ".pfm");
    io::write_file((fs::path(out_dir) / "sharp" / (images[i].id + ".pfm")).string(), b);
    sharp_crc[i] = io::crc32_of(b);
  }

  const int offset = static_cast<int>(detail::splitmix64(opt.seed) % static_cast<std::uint64_t>(bank_size));
  std::vector<SampleRecord> records;
  std::vector<std::size_t> image_of;
  for (std::size_t i = 0; i < images.size(); ++i)
    for (int j = 0; j < per_image; ++j) {
      SampleRecord r;
      r.pattern_id = (offset + static_cast<int>(i) * per_image + j) % bank_size;
      char suffix[16];
      std::snprintf(suffix, sizeof suffix, "_p%02d", r.pattern_id);
      r.source = images[i].id;
      r.id = images[i].id + suffix;
      r.seed = detail::splitmix64(opt.seed ^ (0x51ed2701ULL * (records.size() + 1)));
      r.sharp = "sharp/" + images[i].id + ".pfm";
      r.blurry = "blurry/" + r.id + ".pfm";
      r.field_true = "fields/" + r.id + "_true.bmap";
      r.field_matting = "fields/" + r.id + "_matting.bmap";
      r.field_dt = "fields/" + r.id + "_dt.bmap";
      r.crc_sharp = sharp_crc[i];
      records.push_back(std::move(r));
      image_of.push_back(i);
    }

  const int h = images[0].image.height(), w = images[0].image.width();
  detail::parallel_for(records.size(), opt.threads, [&](std::size_t k) {
    SampleRecord& r = records[k];
    const ImageGrid& sharp = images[image_of[k]].image;
    require_same_plane(sharp.height(), sharp.width(), h, w, "synthesize_dataset");
    try {
      const BlurField truth = generate_blur_field(bank[static_cast<std::size_t>(r.pattern_id)], h, w);
      NoiseConfig noise = opt.noise;
      noise.seed = r.seed;
      const ImageGrid blurry = sv_convolve(sharp, truth, noise);
      const AugmentedVariants v = augment_or_fallback(truth, blurry, opt);
      auto put = [&](const std::string& rel, const io::Bytes& b) {
        io::write_file((fs::path(out_dir) / rel).string(), b);
        return io::crc32_of(b);
      };
      r.crc_blurry = put(r.blurry, io::encode_image(blurry, ".pfm"));
      r.crc_true = put(r.field_true, io::encode_field(truth));
      r.crc_matting = put(r.field_matting, io::encode_field(detail::round_to_float(v.matting)));
      r.crc_dt = put(r.field_dt, io::encode_field(detail::round_to_float(v.dt)));
    } catch (const Error& e) {
      throw Error(e.code(), "record " + r.id + ": " + e.what());
    }
  });
  return records;
}

/// Assigns splits per source image: a seeded permutation of the sorted
/// source ids, the first ⌈ratio·n⌉ (at most n − 1) go to train.
inline void split(std::vector<SampleRecord>& records, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) fail(ErrorCode::domain, "split: ratio must be in (0,1)");
  std::set<std::string> unique;
  for (const auto& r : records) unique.insert(r.source);
  const int n = static_cast<int>(unique.size());
  if (n < 2) fail(ErrorCode::domain, "split: need at least two source images");
  const std::vector<std::string> sources(unique.begin(), unique.end());
  std::mt19937_64 rng(seed);
  const std::vector<int> perm = detail::seeded_permutation(n, rng);
  const int n_train = std::min(n - 1, static_cast<int>(std::ceil(ratio * n - 1e-9)));
  std::map<std::string, Split> assign;
  for (int i = 0; i < n; ++i)
    assign[sources[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]] =
        i < n_train ? Split::train : Split::val;
  for (auto& r : records) r.split = assign[r.source];
}

inline std::string format_manifest(const std::vector<SampleRecord>& records) {
  std::ostringstream out;
  for (const auto& r : records) {
    out << "id=" << r.id << " source=" << r.source << " sharp=" << r.sharp << " blurry=" << r.blurry
        << " field_true=" << r.field_true << " field_matting=" << r.field_matting
        << " field_dt=" << r.field_dt << " pattern_id=" << r.pattern_id << " seed=" << r.seed
        << " split=" << (r.split == Split::train ? "train" : "val") << " crc_sharp=" << r.crc_sharp
        << " crc_blurry=" << r.crc_blurry << " crc_true=" << r.crc_true
        << " crc_matting=" << r.crc_matting << " crc_dt=" << r.crc_dt << "\n";
  }
  return out.str();
}

inline std::vector<SampleRecord> parse_manifest(const std::string& text) {
  std::vector<SampleRecord> records;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::map<std::string, std::string> kv;
    std::istringstream fields(line);
    std::string tok;
    while (fields >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) fail(ErrorCode::bad_magic, "manifest line " + std::to_string(line_no) + ": bad field");
      kv[tok.substr(0, eq)] = tok.substr(eq + 1);
    }
    try {
      SampleRecord r;
      r.id = kv.at("id");
      r.source = kv.at("source");
      r.sharp = kv.at("sharp");
      r.blurry = kv.at("blurry");
      r.field_true = kv.at("field_true");
      r.field_matting = kv.at("field_matting");
      r.field_dt = kv.at("field_dt");
      r.pattern_id = std::stoi(kv.at("pattern_id"));
      r.seed = std::stoull(kv.at("seed"));
      const std::string& s = kv.at("split");
      if (s != "train" && s != "val") throw std::invalid_argument(s);
      r.split = s == "train" ? Split::train : Split::val;
      r.crc_sharp = static_cast<std::uint32_t>(std::stoul(kv.at("crc_sharp")));
      r.crc_blurry = static_cast<std::uint32_t>(std::stoul(kv.at("crc_blurry")));
      r.crc_true = static_cast<std::uint32_t>(std::stoul(kv.at("crc_true")));
      r.crc_matting = static_cast<std::uint32_t>(std::stoul(kv.at("crc_matting")));
      r.crc_dt = static_cast<std::uint32_t>(std::stoul(kv.at("crc_dt")));
      if (r.pattern_id < 0 || r.pattern_id > 38) throw std::out_of_range("pattern_id");
      records.push_back(std::move(r));
    } catch (const std::exception& e) {
      fail(ErrorCode::bad_magic, "manifest line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return records;
}

inline constexpr const char* kManifestName = "manifest.txt";

/// Writes the manifest and returns its CRC-32.
inline std::uint32_t write_manifest(const std::string& dir, const std::vector<SampleRecord>& records) {
  const std::string text = format_manifest(records);
  const io::Bytes b(text.begin(), text.end());
  io::write_file((fs::path(dir) / kManifestName).string(), b);
  return io::crc32_of(b);
}

inline std::vector<SampleRecord> read_manifest(const std::string& dir) {
  const io::Bytes b = io::read_file((fs::path(dir) / kManifestName).string());
  return parse_manifest(std::string(b.begin(), b.end()));
}

/// Loads the samples of one split, verifying every file's checksum.
inline std::vector<TrainingSample> load_samples(const std::string& dir,
                                                const std::vector<SampleRecord>& records, Split which) {
  std::vector<TrainingSample> out;
  auto load = [&](const std::string& rel, std::uint32_t crc) {
    io::Bytes b = io::read_file((fs::path(dir) / rel).string());
    if (io::crc32_of(b) != crc) fail(ErrorCode::checksum, "checksum mismatch: " + rel);
    return b;
  };
  for (const auto& r : records) {
    if (r.split != which) continue;
    TrainingSample s;
    s.id = r.id;
    s.sharp = io::decode_image(load(r.sharp, r.crc_sharp), ".pfm");
    s.blurry = io::decode_image(load(r.blurry, r.crc_blurry), ".pfm");
    s.field_true = io::decode_field(load(r.field_true, r.crc_true));
    s.field_matting = io::decode_field(load(r.field_matting, r.crc_matting));
    s.field_dt = io::decode_field(load(r.field_dt, r.crc_dt));
    if (!s.sharp.same_shape(s.blurry) || s.sharp.channels() != 3)
      fail(ErrorCode::shape_mismatch, "record " + r.id + ": image shapes disagree");
    for (const BlurField* f : {&s.field_true, &s.field_matting, &s.field_dt})
      require_same_plane(f->height(), f->width(), s.sharp.height(), s.sharp.width(), "load_samples");
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace svbr
