#ifndef LUMEN_SYNTH_HPP
#define LUMEN_SYNTH_HPP

#include <torch/torch.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lumen/common.hpp"
#include "lumen/image.hpp"

namespace lumen {

using json = nlohmann::ordered_json;

struct SpecularSite {
  int64_t row = 0;
  int64_t col = 0;
  int64_t radius = 1;
};

struct PolypInfo {
  double center_row = 0;
  double center_col = 0;
  double radius_a = 0;  // semi-axis along `angle`, in pixels
  double radius_b = 0;
  double angle = 0;
};

/// Ground-truth generative factors of one frame. The VC fields (tube_seed,
/// fold_count, depth_gain) describe geometry/shading; the remaining fields are
/// the photometric OC factors. Identity element: tint=1, gain=1, texture_amp=0,
/// no specular sites.
struct SceneFactors {
  uint64_t tube_seed = 0;
  int64_t fold_count = 5;
  double depth_gain = 1.0;
  std::array<double, 3> tint = {1.0, 1.0, 1.0};
  double lighting_gain = 1.0;
  uint64_t texture_seed = 0;
  double texture_amp = 0.0;
  std::vector<SpecularSite> specular_sites;
  std::optional<PolypInfo> polyp;
};

inline json to_json(const SceneFactors& f) {
  json j;
  j["tube_seed"] = f.tube_seed;
  j["fold_count"] = f.fold_count;
  j["depth_gain"] = f.depth_gain;
  j["tint"] = f.tint;
  j["lighting_gain"] = f.lighting_gain;
  j["texture_seed"] = f.texture_seed;
  j["texture_amp"] = f.texture_amp;
  j["specular_sites"] = json::array();
  for (const auto& s : f.specular_sites) {
    j["specular_sites"].push_back({{"row", s.row}, {"col", s.col}, {"radius", s.radius}});
  }
  if (f.polyp) {
    j["polyp"] = {{"center_row", f.polyp->center_row},
                  {"center_col", f.polyp->center_col},
                  {"radius_a", f.polyp->radius_a},
                  {"radius_b", f.polyp->radius_b},
                  {"angle", f.polyp->angle}};
  }
  return j;
}

inline SceneFactors factors_from_json(const json& j) {
  SceneFactors f;
  f.tube_seed = j.at("tube_seed").get<uint64_t>();
  f.fold_count = j.at("fold_count").get<int64_t>();
  f.depth_gain = j.at("depth_gain").get<double>();
  f.tint = j.at("tint").get<std::array<double, 3>>();
  f.lighting_gain = j.at("lighting_gain").get<double>();
  f.texture_seed = j.at("texture_seed").get<uint64_t>();
  f.texture_amp = j.at("texture_amp").get<double>();
  for (const auto& s : j.at("specular_sites")) {
    f.specular_sites.push_back(
        {s.at("row").get<int64_t>(), s.at("col").get<int64_t>(), s.at("radius").get<int64_t>()});
  }
  if (j.contains("polyp")) {
    const auto& p = j.at("polyp");
    f.polyp = PolypInfo{p.at("center_row").get<double>(), p.at("center_col").get<double>(),
                        p.at("radius_a").get<double>(), p.at("radius_b").get<double>(),
                        p.at("angle").get<double>()};
  }
  return f;
}

/// Sampling windows for the photometric factors. The broad window is the
/// unpaired OC training domain; the polyp windows realize the train/test
/// color-lighting shift used by the downstream experiment.
struct FactorRanges {
  double tint_lo = 0.25, tint_hi = 1.0;
  double gain_lo = 0.5, gain_hi = 1.3;
  double amp_lo = 0.05, amp_hi = 0.25;
  int64_t max_specular_sites = 4;

  static FactorRanges broad() { return {}; }
  static FactorRanges polyp_bright() {
    FactorRanges r;
    r.tint_lo = 0.62;
    r.tint_hi = 1.0;
    r.gain_lo = 0.9;
    r.gain_hi = 1.3;
    return r;
  }
  static FactorRanges polyp_shifted() {
    FactorRanges r;
    r.tint_lo = 0.25;
    r.tint_hi = 0.55;
    r.gain_lo = 0.5;
    r.gain_hi = 0.85;
    return r;
  }
};

inline void validate_resolution(int64_t res) {
  if (res < 16 || (res & (res - 1)) != 0) {
    throw ConfigError("resolution must be a power of 2 and >= 16, got " +
                      std::to_string(res));
  }
}

inline void validate_factors(const SceneFactors& f, int64_t res) {
  auto bad = [&](const std::string& what) {
    throw ValidationError("scene factor out of range: " + what);
  };
  if (f.fold_count < 1 || f.fold_count > 16) bad("fold_count");
  if (f.depth_gain < 0.1 || f.depth_gain > 4.0) bad("depth_gain");
  for (double t : f.tint) {
    if (t < 0.0 || t > 1.0) bad("tint");
  }
  if (f.lighting_gain < 0.0 || f.lighting_gain > 4.0) bad("lighting_gain");
  if (f.texture_amp < 0.0 || f.texture_amp > 0.5) bad("texture_amp");
  for (const auto& s : f.specular_sites) {
    if (s.row < 0 || s.row >= res || s.col < 0 || s.col >= res) bad("specular site center");
    if (s.radius < 1 || s.radius > res / 4) bad("specular radius");
  }
}

namespace tube {

/// Per-seed tube parameters: axis offset, fold phase/depth. Radius is fixed
/// at 1, camera at the origin looking down +z.
struct TubeParams {
  double cx = 0, cy = 0;
  double fold_phase = 0;
  double fold_depth = 0.35;
  int64_t fold_count = 5;
  double depth_gain = 1.0;
};

inline TubeParams tube_params(uint64_t tube_seed, int64_t fold_count, double depth_gain) {
  Rng rng(tube_seed);
  TubeParams p;
  double ang = rng.uniform(0, 2 * M_PI);
  double off = rng.uniform(0.05, 0.3);
  p.cx = off * std::cos(ang);
  p.cy = off * std::sin(ang);
  p.fold_phase = rng.uniform();
  p.fold_depth = rng.uniform(0.25, 0.45);
  p.fold_count = fold_count;
  p.depth_gain = depth_gain;
  return p;
}

inline constexpr double kFovScale = 0.85;
inline constexpr double kReferenceDistance = 1.2;  // wall distance that maps to brightness 1
inline constexpr double kVisibleDepth = 6.0;       // depth window the folds tile

/// Normalized ray direction for pixel (row, col).
inline std::array<double, 3> pixel_ray(int64_t row, int64_t col, int64_t res) {
  double u = ((static_cast<double>(col) + 0.5) / static_cast<double>(res)) * 2.0 - 1.0;
  double v = ((static_cast<double>(row) + 0.5) / static_cast<double>(res)) * 2.0 - 1.0;
  double dx = u * kFovScale, dy = v * kFovScale, dz = 1.0;
  double n = std::sqrt(dx * dx + dy * dy + dz * dz);
  return {dx / n, dy / n, dz / n};
}

/// Closed-form first intersection of the pixel ray with the tube wall.
inline double wall_distance(const TubeParams& p, const std::array<double, 3>& dir) {
  double a = dir[0] * dir[0] + dir[1] * dir[1];
  double b = dir[0] * p.cx + dir[1] * p.cy;
  double c = p.cx * p.cx + p.cy * p.cy - 1.0;
  if (a < 1e-300) return 1e9;
  double disc = b * b - a * c;
  return (b + std::sqrt(disc)) / a;
}

/// Inverse-square shading with ring folds along depth, in [0, 1].
inline double shade(const TubeParams& p, double dist, double depth) {
  double falloff = kReferenceDistance / dist;
  double brightness = p.depth_gain * falloff * falloff;
  double cyc = std::cos(2.0 * M_PI * (static_cast<double>(p.fold_count) * depth / kVisibleDepth +
                                      p.fold_phase));
  double ring = 0.5 + 0.5 * cyc;
  double fold = 1.0 - p.fold_depth * ring * ring * ring;
  double v = brightness * fold;
  return v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
}

}  // namespace tube

struct VcFrame {
  torch::Tensor image;  // 3xRxR in [-1,1], grayscale (R=G=B)
  SceneFactors factors;
};

/// Renders one texture-free tube frame: inverse-square shaded interior with
/// ring folds, deterministic in `seed`.
inline VcFrame generate_vc_frame(uint64_t seed, int64_t res) {
  validate_resolution(res);
  Rng rng = Rng(seed).fork(1);
  SceneFactors f;
  f.tube_seed = splitmix64(seed ^ 0xA5A5A5A5ULL);
  f.fold_count = 3 + rng.uniform_int(5);
  f.depth_gain = rng.uniform(0.8, 1.25);

  auto params = tube::tube_params(f.tube_seed, f.fold_count, f.depth_gain);
  auto img = torch::empty({3, res, res}, torch::kFloat32);
  auto acc = img.accessor<float, 3>();
  for (int64_t r = 0; r < res; ++r) {
    for (int64_t c = 0; c < res; ++c) {
      auto dir = tube::pixel_ray(r, c, res);
      double d = tube::wall_distance(params, dir);
      double v = tube::shade(params, d, d * dir[2]);
      auto px = static_cast<float>(v * 2.0 - 1.0);
      acc[0][r][c] = px;
      acc[1][r][c] = px;
      acc[2][r][c] = px;
    }
  }
  return {img, f};
}

namespace detail {

/// Band-limited texture field in [-1,1]: a normalized sum of a few random
/// oriented sinusoids drawn from texture_seed.
inline torch::Tensor texture_field(uint64_t texture_seed, int64_t res) {
  constexpr int kWaves = 6;
  Rng rng(texture_seed);
  auto field = torch::zeros({res, res}, torch::kFloat32);
  auto acc = field.accessor<float, 2>();
  for (int w = 0; w < kWaves; ++w) {
    double theta = rng.uniform(0, M_PI);
    double freq = rng.uniform(2.5, 7.5);
    double phase = rng.uniform(0, 2 * M_PI);
    double kx = std::cos(theta) * 2.0 * M_PI * freq / static_cast<double>(res);
    double ky = std::sin(theta) * 2.0 * M_PI * freq / static_cast<double>(res);
    for (int64_t r = 0; r < res; ++r) {
      for (int64_t c = 0; c < res; ++c) {
        acc[r][c] += static_cast<float>(
            std::sin(kx * static_cast<double>(c) + ky * static_cast<double>(r) + phase) / kWaves);
      }
    }
  }
  return field;
}

inline double smoothstep01(double x) {
  x = x < 0.0 ? 0.0 : (x > 1.0 ? 1.0 : x);
  return x * x * (3.0 - 2.0 * x);
}

}  // namespace detail

/// Tint and lighting-gain stages in delta form on a [-1,1] image; with
/// tint=1 and gain=1 the input is returned bit-exactly. Exposed separately so
/// the pre-clamp gain monotonicity property is testable.
inline torch::Tensor apply_tint_gain(const torch::Tensor& img, const std::array<double, 3>& tint,
                                     double gain, bool clamp_output = true) {
  auto out = img.clone();
  for (int64_t ch = 0; ch < 3; ++ch) {
    if (tint[ch] != 1.0) {
      out[ch] = out[ch] + (out[ch] + 1.0) * (tint[ch] - 1.0);
    }
    if (gain != 1.0) {
      out[ch] = out[ch] + (out[ch] + 1.0) * (gain - 1.0);
    }
  }
  return clamp_output ? out.clamp(-1.0, 1.0) : out;
}

/// Applies the photometric factor chain to a VC frame: tint, lighting gain,
/// additive texture field, saturating specular disks. Identity factors are an
/// exact no-op.
inline torch::Tensor generate_oc_frame(const torch::Tensor& vc, const SceneFactors& f) {
  validate_image(vc);
  int64_t res = vc.size(1);
  validate_factors(f, res);

  auto out = apply_tint_gain(vc, f.tint, f.lighting_gain);

  if (f.texture_amp > 0.0) {
    auto field = detail::texture_field(f.texture_seed, res);
    // Reddish channel weighting; amplitudes are [0,1]-space units, hence x2.
    const std::array<double, 3> channel_weight = {1.0, 0.45, 0.35};
    for (int64_t ch = 0; ch < 3; ++ch) {
      out[ch] = out[ch] + field * static_cast<float>(2.0 * f.texture_amp * channel_weight[ch]);
    }
    out = out.clamp(-1.0, 1.0);
  }

  if (!f.specular_sites.empty()) {
    auto acc = out.accessor<float, 3>();
    for (const auto& site : f.specular_sites) {
      auto rad = static_cast<double>(site.radius);
      int64_t reach = site.radius + 2;
      for (int64_t r = std::max<int64_t>(0, site.row - reach);
           r <= std::min<int64_t>(res - 1, site.row + reach); ++r) {
        for (int64_t c = std::max<int64_t>(0, site.col - reach);
             c <= std::min<int64_t>(res - 1, site.col + reach); ++c) {
          double dr = static_cast<double>(r - site.row);
          double dc = static_cast<double>(c - site.col);
          double dist = std::sqrt(dr * dr + dc * dc);
          // Saturated core out to `radius`, smooth feather over 1.5px beyond.
          double w = dist <= rad ? 1.0 : 1.0 - detail::smoothstep01((dist - rad) / 1.5);
          if (w <= 0.0) continue;
          auto lift = static_cast<float>((0.97 * w) * 2.0 - 1.0);
          for (int64_t ch = 0; ch < 3; ++ch) {
            acc[ch][r][c] = std::max(acc[ch][r][c], lift);
          }
        }
      }
    }
  }
  return out;
}

/// Draws photometric OC factors from the given ranges.
inline SceneFactors sample_oc_factors(Rng& rng, int64_t res, const FactorRanges& ranges) {
  SceneFactors f;
  for (auto& t : f.tint) t = rng.uniform(ranges.tint_lo, ranges.tint_hi);
  f.lighting_gain = rng.uniform(ranges.gain_lo, ranges.gain_hi);
  f.texture_seed = static_cast<uint64_t>(rng.uniform_int(1LL << 62));
  f.texture_amp = rng.uniform(ranges.amp_lo, ranges.amp_hi);
  int64_t n_sites = rng.uniform_int(ranges.max_specular_sites + 1);
  int64_t max_radius = std::max<int64_t>(1, res / 16);
  for (int64_t i = 0; i < n_sites; ++i) {
    SpecularSite s;
    s.row = static_cast<int64_t>(rng.uniform(0.1, 0.9) * static_cast<double>(res));
    s.col = static_cast<int64_t>(rng.uniform(0.1, 0.9) * static_cast<double>(res));
    s.radius = 1 + rng.uniform_int(max_radius);
    f.specular_sites.push_back(s);
  }
  return f;
}

struct PolypSample {
  torch::Tensor image;  // OC-like frame with one protrusion
  torch::Tensor mask;   // HxW in {0,1}
  SceneFactors factors;
};

namespace detail {

/// Stamps a dome-shaded elliptical protrusion into a VC frame and returns its
/// pixel mask.
inline torch::Tensor stamp_polyp(torch::Tensor& vc, const PolypInfo& p) {
  int64_t res = vc.size(1);
  auto mask = torch::zeros({res, res}, torch::kFloat32);
  auto macc = mask.accessor<float, 2>();
  auto acc = vc.accessor<float, 3>();
  double ca = std::cos(p.angle), sa = std::sin(p.angle);
  for (int64_t r = 0; r < res; ++r) {
    for (int64_t c = 0; c < res; ++c) {
      double dr = static_cast<double>(r) - p.center_row;
      double dc = static_cast<double>(c) - p.center_col;
      double x = (dc * ca + dr * sa) / p.radius_a;
      double y = (-dc * sa + dr * ca) / p.radius_b;
      double q = x * x + y * y;
      if (q <= 1.0) {
        macc[r][c] = 1.0f;
        double dome = std::sqrt(1.0 - q);
        double v01 = (static_cast<double>(acc[0][r][c]) + 1.0) * 0.5;
        v01 = std::min(1.0, v01 + 0.5 * dome);
        auto px = static_cast<float>(v01 * 2.0 - 1.0);
        acc[0][r][c] = px;
        acc[1][r][c] = px;
        acc[2][r][c] = px;
      } else if (q <= 1.8) {
        // Shadowed rim just outside the protrusion.
        double fade = 1.0 - (q - 1.0) / 0.8;
        double v01 = (static_cast<double>(acc[0][r][c]) + 1.0) * 0.5;
        v01 = std::max(0.0, v01 - 0.2 * fade);
        auto px = static_cast<float>(v01 * 2.0 - 1.0);
        acc[0][r][c] = px;
        acc[1][r][c] = px;
        acc[2][r][c] = px;
      }
    }
  }
  return mask;
}

}  // namespace detail

/// One OC-like frame with a single elliptical polyp and its mask,
/// deterministic in `seed`. `ranges` selects the photometric window.
inline PolypSample generate_polyp_pair(uint64_t seed, int64_t res,
                                       const FactorRanges& ranges = FactorRanges::polyp_bright()) {
  validate_resolution(res);
  auto vc = generate_vc_frame(Rng(seed).fork(11).seed(), res);

  Rng geo = Rng(seed).fork(12);
  PolypInfo p;
  double half = static_cast<double>(res) / 2.0;
  double ang = geo.uniform(0, 2 * M_PI);
  double radial = geo.uniform(0.28, 0.52) * half;
  p.center_row = half + radial * std::sin(ang);
  p.center_col = half + radial * std::cos(ang);
  p.radius_a = geo.uniform(0.07, 0.2) * static_cast<double>(res);
  p.radius_b = geo.uniform(0.07, 0.2) * static_cast<double>(res);
  p.angle = geo.uniform(0, M_PI);

  auto img = vc.image.clone();
  auto mask = detail::stamp_polyp(img, p);

  Rng photo = Rng(seed).fork(13);
  auto factors = sample_oc_factors(photo, res, ranges);
  factors.tube_seed = vc.factors.tube_seed;
  factors.fold_count = vc.factors.fold_count;
  factors.depth_gain = vc.factors.depth_gain;
  factors.polyp = p;

  return {generate_oc_frame(img, factors), mask, factors};
}

// ---------------------------------------------------------------------------
// Dataset generation
//
// Layout: <root>/{vc,oc,polyp}/{train,val,test}/NNNNNN.png with a SceneFactors
// JSON next to each frame; polyp frames add NNNNNN_mask.png. Every frame's
// seed is spec.seed + split base + domain offset + index, with bases spaced so
// the split seed ranges are disjoint by construction.
// ---------------------------------------------------------------------------

struct DatasetSpec {
  int64_t n_train = 1500;
  int64_t n_val = 900;
  int64_t n_test = 600;
  int64_t resolution = 64;
  uint64_t seed = 0;
  FactorRanges oc_ranges = FactorRanges::broad();
  FactorRanges polyp_train_ranges = FactorRanges::polyp_bright();
  FactorRanges polyp_test_ranges = FactorRanges::polyp_shifted();
};

inline constexpr uint64_t kSplitSeedBase[3] = {0, 1000000, 2000000};
inline constexpr uint64_t kOcSeedOffset = 500000;     // unpaired OC geometry
inline constexpr uint64_t kPolypSeedOffset = 750000;
inline constexpr const char* kSplitNames[3] = {"train", "val", "test"};

inline std::string frame_name(int64_t index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06lld", static_cast<long long>(index));
  return buf;
}

inline void write_dataset(const std::string& root, const DatasetSpec& spec) {
  validate_resolution(spec.resolution);
  const int64_t counts[3] = {spec.n_train, spec.n_val, spec.n_test};
  for (auto n : counts) {
    if (n < 0 || n > 250000) {
      throw ConfigError("per-split frame count must be in [0, 250000]");
    }
  }
  namespace fs = std::filesystem;
  for (int split = 0; split < 3; ++split) {
    int64_t n = counts[split];
    uint64_t base = spec.seed + kSplitSeedBase[split];
    fs::path vc_dir = fs::path(root) / "vc" / kSplitNames[split];
    fs::path oc_dir = fs::path(root) / "oc" / kSplitNames[split];
    fs::path polyp_dir = fs::path(root) / "polyp" / kSplitNames[split];
    fs::create_directories(vc_dir);
    fs::create_directories(oc_dir);
    fs::create_directories(polyp_dir);

    for (int64_t i = 0; i < n; ++i) {
      auto name = frame_name(i);

      auto vc = generate_vc_frame(base + static_cast<uint64_t>(i), spec.resolution);
      save_image(vc.image, (vc_dir / (name + ".png")).string());
      std::ofstream((vc_dir / (name + ".json")).string()) << to_json(vc.factors).dump(2) << "\n";

      uint64_t oc_seed = base + kOcSeedOffset + static_cast<uint64_t>(i);
      auto geo = generate_vc_frame(oc_seed, spec.resolution);
      Rng photo = Rng(oc_seed).fork(21);
      auto factors = sample_oc_factors(photo, spec.resolution, spec.oc_ranges);
      factors.tube_seed = geo.factors.tube_seed;
      factors.fold_count = geo.factors.fold_count;
      factors.depth_gain = geo.factors.depth_gain;
      auto oc = generate_oc_frame(geo.image, factors);
      save_image(oc, (oc_dir / (name + ".png")).string());
      std::ofstream((oc_dir / (name + ".json")).string()) << to_json(factors).dump(2) << "\n";

      const auto& ranges = split == 2 ? spec.polyp_test_ranges : spec.polyp_train_ranges;
      auto polyp =
          generate_polyp_pair(base + kPolypSeedOffset + static_cast<uint64_t>(i), spec.resolution, ranges);
      save_image(polyp.image, (polyp_dir / (name + ".png")).string());
      save_mask(polyp.mask, (polyp_dir / (name + "_mask.png")).string());
      std::ofstream((polyp_dir / (name + ".json")).string())
          << to_json(polyp.factors).dump(2) << "\n";
    }
  }
}

/// Sorted frame PNGs of one domain split (masks excluded).
inline std::vector<std::string> list_split(const std::string& root, const std::string& domain,
                                           const std::string& split) {
  namespace fs = std::filesystem;
  fs::path dir = fs::path(root) / domain / split;
  if (!fs::is_directory(dir)) {
    throw IoError("dataset split directory missing: " + dir.string());
  }
  std::vector<std::string> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    auto p = e.path();
    if (p.extension() == ".png" && p.stem().string().find("_mask") == std::string::npos) {
      files.push_back(p.string());
    }
  }
  std::sort(files.begin(), files.end());
  return files;
}

/// Loads a whole split as an NCHW float32 stack.
inline torch::Tensor load_split_images(const std::string& root, const std::string& domain,
                                       const std::string& split) {
  auto files = list_split(root, domain, split);
  if (files.empty()) throw IoError("empty dataset split: " + root + "/" + domain + "/" + split);
  std::vector<torch::Tensor> imgs;
  imgs.reserve(files.size());
  for (const auto& f : files) imgs.push_back(load_image(f));
  return torch::stack(imgs);
}

struct PolypSplit {
  torch::Tensor images;  // Nx3xRxR
  torch::Tensor masks;   // NxRxR
  std::vector<std::string> files;
};

inline PolypSplit load_polyp_split(const std::string& root, const std::string& split) {
  auto files = list_split(root, "polyp", split);
  if (files.empty()) throw IoError("empty polyp split: " + root + "/" + split);
  std::vector<torch::Tensor> imgs, masks;
  for (const auto& f : files) {
    imgs.push_back(load_image(f));
    auto mask_path = f.substr(0, f.size() - 4) + "_mask.png";
    masks.push_back(load_mask(mask_path));
  }
  return {torch::stack(imgs), torch::stack(masks), files};
}

}  // namespace lumen

#endif  // LUMEN_SYNTH_HPP
