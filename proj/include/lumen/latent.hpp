#ifndef LUMEN_LATENT_HPP
#define LUMEN_LATENT_HPP

#include <torch/torch.h>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lumen/codes.hpp"
#include "lumen/common.hpp"
#include "lumen/image.hpp"
#include "lumen/networks.hpp"
#include "lumen/synth.hpp"

namespace lumen {

/// Linear interpolation between two codes of identical shape:
/// code_i = (1 - t_i) a + t_i b, t_i = i/(steps-1). Endpoints are returned
/// exactly (clones of a and b).
inline std::vector<torch::Tensor> interpolate_codes(const torch::Tensor& a,
                                                    const torch::Tensor& b, int64_t steps) {
  if (steps < 2) throw ConfigError("interpolate_codes: steps must be >= 2");
  if (a.sizes() != b.sizes()) throw ValidationError("interpolate_codes: shape mismatch");
  std::vector<torch::Tensor> out;
  out.reserve(steps);
  for (int64_t i = 0; i < steps; ++i) {
    if (i == 0) {
      out.push_back(a.clone());
    } else if (i == steps - 1) {
      out.push_back(b.clone());
    } else {
      double t = static_cast<double>(i) / static_cast<double>(steps - 1);
      out.push_back((1.0 - t) * a + t * b);
    }
  }
  return out;
}

/// Level-wise interpolation for multi-resolution code sets.
inline std::vector<std::vector<torch::Tensor>> interpolate_code_sets(
    const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b, int64_t steps) {
  if (a.size() != b.size()) throw ValidationError("interpolate_code_sets: level count mismatch");
  if (a.empty()) throw ValidationError("interpolate_code_sets: empty code set");
  std::vector<std::vector<torch::Tensor>> out(static_cast<size_t>(steps));
  for (size_t level = 0; level < a.size(); ++level) {
    auto series = interpolate_codes(a[level], b[level], steps);
    for (int64_t i = 0; i < steps; ++i) {
      out[static_cast<size_t>(i)].push_back(series[static_cast<size_t>(i)]);
    }
  }
  return out;
}

enum class WalkCode { cl, ts };

struct InterpolationSpec {
  WalkCode code = WalkCode::cl;
  int64_t steps = 8;
  torch::Tensor zcl_a, zcl_b;                // endpoints when code == cl
  std::vector<torch::Tensor> zts_a, zts_b;   // endpoints when code == ts
  torch::Tensor zcl_fixed;                   // held constant when code == ts
  std::vector<torch::Tensor> zts_fixed;      // held constant when code == cl
};

struct WalkResult {
  std::vector<torch::Tensor> frames;  // steps frames, each 3xRxR
  torch::Tensor strip;                // 3 x R x (steps*R), left-to-right ascending t
};

/// Renders F(vc, ., .) along a linear walk of one code, holding the other
/// fixed. vc is a single 3xRxR frame.
inline WalkResult latent_walk(GeneratorF& f, const torch::Tensor& vc,
                              const InterpolationSpec& spec) {
  validate_image(vc, f->cfg.resolution);
  if (spec.steps < 2) throw ConfigError("latent_walk: steps must be >= 2");
  torch::NoGradGuard guard;
  auto vc4 = vc.unsqueeze(0);

  WalkResult result;
  result.frames.reserve(spec.steps);
  if (spec.code == WalkCode::cl) {
    auto series = interpolate_codes(spec.zcl_a, spec.zcl_b, spec.steps);
    for (const auto& zcl : series) {
      result.frames.push_back(f->forward(vc4, zcl, spec.zts_fixed).squeeze(0));
    }
  } else {
    auto series = interpolate_code_sets(spec.zts_a, spec.zts_b, spec.steps);
    for (const auto& zts : series) {
      result.frames.push_back(f->forward(vc4, spec.zcl_fixed, zts).squeeze(0));
    }
  }
  result.strip = torch::cat(result.frames, /*dim=*/2);
  return result;
}

/// Attribute transfer: geometry and texture/specular come from the target,
/// color/lighting from the reference — F(G_im(target), G_cl(ref), G_ts(target)).
/// By construction this never consumes the target's predicted z_cl nor the
/// reference's predicted z_ts.
inline torch::Tensor transfer_color_lighting(GeneratorG& g, GeneratorF& f,
                                             const torch::Tensor& reference_oc,
                                             const torch::Tensor& target_oc) {
  validate_image(reference_oc, g->cfg.resolution);
  validate_image(target_oc, g->cfg.resolution);
  torch::NoGradGuard guard;
  auto t_out = g->forward(target_oc.unsqueeze(0));
  auto r_out = g->forward(reference_oc.unsqueeze(0));
  return f->forward(t_out.image, r_out.zcl_hat, t_out.zts_hat).squeeze(0);
}

struct AugmentationRecord {
  std::string source;             // source frame path
  int64_t variant = 0;            // 0 = passthrough original
  std::vector<double> zcl;        // sampled code (empty for variant 0)
  std::string output_image;       // path relative to the output root
  std::string output_mask;
};

inline nlohmann::ordered_json to_json(const AugmentationRecord& r) {
  return {{"source", r.source}, {"variant", r.variant}, {"zcl", r.zcl},
          {"output_image", r.output_image}, {"output_mask", r.output_mask}};
}

inline AugmentationRecord augmentation_record_from_json(const nlohmann::json& j) {
  AugmentationRecord r;
  r.source = j.at("source").get<std::string>();
  r.variant = j.at("variant").get<int64_t>();
  r.zcl = j.at("zcl").get<std::vector<double>>();
  r.output_image = j.at("output_image").get<std::string>();
  r.output_mask = j.at("output_mask").get<std::string>();
  return r;
}

struct AugmentResult {
  std::vector<AugmentationRecord> records;
  std::string manifest_path;
};

/// Recolor augmentation: every image contributes itself plus n_aug variants
/// rendered as F(G_im(x), fresh z_cl, G_ts(x)) — geometry and texture/specular
/// preserved, color/lighting resampled. Masks are copied unchanged, written
/// once per source and referenced by every variant. Codes are drawn from
/// per-image streams forked from (seed, image index), so output bytes do not
/// depend on processing order.
inline AugmentResult augment_dataset(GeneratorG& g, GeneratorF& f, const PolypSplit& data,
                                     int64_t n_aug, uint64_t seed, const std::string& out_dir) {
  if (n_aug < 0) throw ConfigError("augment_dataset: n_aug must be >= 0");
  if (data.images.size(0) == 0) throw ValidationError("augment_dataset: empty input set");
  namespace fs = std::filesystem;
  fs::path frames_dir = fs::path(out_dir) / "frames";
  fs::create_directories(frames_dir);

  torch::NoGradGuard guard;
  Rng master(seed);
  AugmentResult result;
  auto manifest_path = fs::path(out_dir) / "manifest.jsonl";
  std::ofstream manifest(manifest_path, std::ios::trunc);
  if (!manifest) throw IoError("cannot open augment manifest: " + manifest_path.string());

  int64_t n = data.images.size(0);
  for (int64_t i = 0; i < n; ++i) {
    auto img = data.images[i];
    auto mask = data.masks[i];
    auto stem = fs::path(data.files[static_cast<size_t>(i)]).stem().string();

    auto mask_name = stem + "_mask.png";
    save_mask(mask, (frames_dir / mask_name).string());

    GeneratorOutputs extracted;
    if (n_aug > 0) extracted = g->forward(img.unsqueeze(0));
    Rng stream = master.fork(static_cast<uint64_t>(i));

    for (int64_t v = 0; v <= n_aug; ++v) {
      AugmentationRecord rec;
      rec.source = data.files[static_cast<size_t>(i)];
      rec.variant = v;
      rec.output_mask = "frames/" + mask_name;
      auto image_name = stem + "_v" + std::to_string(v) + ".png";
      rec.output_image = "frames/" + image_name;
      if (v == 0) {
        save_image(img, (frames_dir / image_name).string());
      } else {
        auto zcl = sample_zcl(stream, 1, g->cfg.d_cl);
        auto out = f->forward(extracted.image, zcl, extracted.zts_hat).squeeze(0);
        save_image(out, (frames_dir / image_name).string());
        auto acc = zcl.accessor<float, 2>();
        for (int64_t d = 0; d < g->cfg.d_cl; ++d) rec.zcl.push_back(acc[0][d]);
      }
      manifest << to_json(rec).dump() << "\n";
      result.records.push_back(std::move(rec));
    }
  }
  manifest.flush();
  if (!manifest) throw IoError("failed writing augment manifest: " + manifest_path.string());
  result.manifest_path = manifest_path.string();
  return result;
}

/// Loads an augmented set back as (image, mask) pairs in manifest order.
inline PolypSplit load_augmented(const std::string& out_dir) {
  namespace fs = std::filesystem;
  auto manifest_path = fs::path(out_dir) / "manifest.jsonl";
  std::ifstream manifest(manifest_path);
  if (!manifest) throw IoError("cannot open augment manifest: " + manifest_path.string());
  std::vector<torch::Tensor> images, masks;
  std::vector<std::string> files;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    auto rec = augmentation_record_from_json(nlohmann::json::parse(line));
    auto img_path = (fs::path(out_dir) / rec.output_image).string();
    images.push_back(load_image(img_path));
    masks.push_back(load_mask((fs::path(out_dir) / rec.output_mask).string()));
    files.push_back(img_path);
  }
  if (images.empty()) throw IoError("empty augment manifest: " + manifest_path.string());
  return {torch::stack(images), torch::stack(masks), files};
}

}  // namespace lumen

#endif  // LUMEN_LATENT_HPP
