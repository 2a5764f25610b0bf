#ifndef LUMEN_EVAL_HPP
#define LUMEN_EVAL_HPP

#include <torch/torch.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lumen/codes.hpp"
#include "lumen/common.hpp"
#include "lumen/image.hpp"
#include "lumen/latent.hpp"
#include "lumen/networks.hpp"
#include "lumen/synth.hpp"

namespace lumen {

// ---------------------------------------------------------------------------
// Segmentation metrics
// ---------------------------------------------------------------------------

struct SegMetrics {
  double dice = 0, iou = 0, mae = 0;
};

namespace detail {

inline void check_same_shape(const torch::Tensor& a, const torch::Tensor& b, const char* who) {
  if (a.sizes() != b.sizes()) throw ValidationError(std::string(who) + ": shape mismatch");
}

inline torch::Tensor binarize(const torch::Tensor& m) { return (m > 0.5).to(torch::kFloat64); }

}  // namespace detail

/// Dice = 2|A∩B| / (|A|+|B|); empty-vs-empty = 1. Inputs thresholded at 0.5.
inline double dice_score(const torch::Tensor& pred, const torch::Tensor& truth) {
  detail::check_same_shape(pred, truth, "dice");
  auto p = detail::binarize(pred), t = detail::binarize(truth);
  double inter = (p * t).sum().item<double>();
  double total = p.sum().item<double>() + t.sum().item<double>();
  if (total == 0.0) return 1.0;
  return 2.0 * inter / total;
}

/// IoU = |A∩B| / |A∪B|; empty-vs-empty = 1. Inputs thresholded at 0.5.
inline double iou_score(const torch::Tensor& pred, const torch::Tensor& truth) {
  detail::check_same_shape(pred, truth, "iou");
  auto p = detail::binarize(pred), t = detail::binarize(truth);
  double inter = (p * t).sum().item<double>();
  double uni = p.sum().item<double>() + t.sum().item<double>() - inter;
  if (uni == 0.0) return 1.0;
  return inter / uni;
}

/// Mean absolute error between a probability map in [0,1] and a binary mask.
inline double mae_score(const torch::Tensor& prob, const torch::Tensor& truth) {
  detail::check_same_shape(prob, truth, "mae");
  return (prob.to(torch::kFloat64) - detail::binarize(truth)).abs().mean().item<double>();
}

// ---------------------------------------------------------------------------
// Toy segmenter (small UNet-style encoder-decoder, ~0.5M parameters)
// ---------------------------------------------------------------------------

struct ToySegmenterImpl : torch::nn::Module {
  torch::nn::Conv2d e1a{nullptr}, e1b{nullptr}, e2a{nullptr}, e2b{nullptr}, e3a{nullptr},
      e3b{nullptr}, d1a{nullptr}, d1b{nullptr}, d2a{nullptr}, d2b{nullptr}, out{nullptr};
  torch::nn::ConvTranspose2d up1{nullptr}, up2{nullptr};

  explicit ToySegmenterImpl(int64_t width = 32) {
    auto conv = [](int64_t i, int64_t o) {
      return torch::nn::Conv2d(torch::nn::Conv2dOptions(i, o, 3).padding(1));
    };
    int64_t w = width;
    e1a = register_module("e1a", conv(3, w));
    e1b = register_module("e1b", conv(w, w));
    e2a = register_module("e2a", conv(w, 2 * w));
    e2b = register_module("e2b", conv(2 * w, 2 * w));
    e3a = register_module("e3a", conv(2 * w, 4 * w));
    e3b = register_module("e3b", conv(4 * w, 4 * w));
    up1 = register_module("up1", torch::nn::ConvTranspose2d(
                                     torch::nn::ConvTranspose2dOptions(4 * w, 2 * w, 2).stride(2)));
    d1a = register_module("d1a", conv(4 * w, 2 * w));
    d1b = register_module("d1b", conv(2 * w, 2 * w));
    up2 = register_module("up2", torch::nn::ConvTranspose2d(
                                     torch::nn::ConvTranspose2dOptions(2 * w, w, 2).stride(2)));
    d2a = register_module("d2a", conv(2 * w, w));
    d2b = register_module("d2b", conv(w, w));
    out = register_module("out", torch::nn::Conv2d(torch::nn::Conv2dOptions(w, 1, 1)));
  }

  /// Logits at input resolution: [B,1,R,R].
  torch::Tensor forward(const torch::Tensor& x) {
    auto relu_in = [](const torch::Tensor& t) { return torch::relu(detail::instance_norm(t)); };
    auto a = relu_in(e1b->forward(relu_in(e1a->forward(x))));
    auto b = relu_in(e2b->forward(relu_in(e2a->forward(torch::max_pool2d(a, 2)))));
    auto c = relu_in(e3b->forward(relu_in(e3a->forward(torch::max_pool2d(b, 2)))));
    auto u = relu_in(up1->forward(c));
    u = relu_in(d1b->forward(relu_in(d1a->forward(torch::cat({u, b}, 1)))));
    auto v = relu_in(up2->forward(u));
    v = relu_in(d2b->forward(relu_in(d2a->forward(torch::cat({v, a}, 1)))));
    return out->forward(v);
  }
};
TORCH_MODULE(ToySegmenter);

struct SegTrainConfig {
  int64_t epochs = 12;
  int64_t batch_size = 8;
  double learning_rate = 1e-3;
  uint64_t seed = 0;
  int64_t width = 32;
};

/// Binary cross-entropy plus soft dice on sigmoid probabilities.
inline torch::Tensor seg_loss(const torch::Tensor& logits, const torch::Tensor& masks) {
  auto target = masks.unsqueeze(1);
  auto bce = torch::binary_cross_entropy_with_logits(logits, target);
  auto p = torch::sigmoid(logits);
  auto inter = (p * target).sum();
  auto soft_dice = 1.0 - (2.0 * inter + 1.0) / (p.sum() + target.sum() + 1.0);
  return bce + soft_dice;
}

/// Trains the toy segmenter; deterministic in config.seed.
inline ToySegmenter train_toy_segmenter(const torch::Tensor& images, const torch::Tensor& masks,
                                        const SegTrainConfig& cfg) {
  if (images.dim() != 4 || images.size(0) == 0) {
    throw ValidationError("train_toy_segmenter: empty or malformed dataset");
  }
  if (masks.dim() != 3 || masks.size(0) != images.size(0)) {
    throw ValidationError("train_toy_segmenter: image/mask count mismatch");
  }
  torch::set_num_threads(1);
  torch::manual_seed(cfg.seed);
  ToySegmenter net(cfg.width);
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(cfg.learning_rate));
  Rng rng = Rng(cfg.seed).fork(3);

  int64_t n = images.size(0);
  int64_t batch = std::min(cfg.batch_size, n);
  std::vector<int64_t> order(static_cast<size_t>(n));
  for (int64_t e = 0; e < cfg.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    for (int64_t s = 0; s + batch <= n; s += batch) {
      auto idx = torch::empty({batch}, torch::kInt64);
      auto acc = idx.accessor<int64_t, 1>();
      for (int64_t b = 0; b < batch; ++b) acc[b] = order[static_cast<size_t>(s + b)];
      auto loss = seg_loss(net->forward(images.index_select(0, idx)),
                           masks.index_select(0, idx));
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }
  return net;
}

/// Sigmoid probability maps [N,R,R], evaluated without gradients.
inline torch::Tensor predict_probs(ToySegmenter& net, const torch::Tensor& images,
                                   int64_t chunk = 16) {
  torch::NoGradGuard guard;
  std::vector<torch::Tensor> outs;
  for (int64_t s = 0; s < images.size(0); s += chunk) {
    auto e = std::min(images.size(0), s + chunk);
    outs.push_back(torch::sigmoid(net->forward(images.slice(0, s, e))).squeeze(1));
  }
  return torch::cat(outs, 0);
}

/// Mean per-frame metrics of a segmenter on an (image, mask) set.
inline SegMetrics evaluate_segmenter(ToySegmenter& net, const torch::Tensor& images,
                                     const torch::Tensor& masks) {
  auto probs = predict_probs(net, images);
  SegMetrics m;
  int64_t n = images.size(0);
  for (int64_t i = 0; i < n; ++i) {
    m.dice += dice_score(probs[i], masks[i]);
    m.iou += iou_score(probs[i], masks[i]);
    m.mae += mae_score(probs[i], masks[i]);
  }
  m.dice /= static_cast<double>(n);
  m.iou /= static_cast<double>(n);
  m.mae /= static_cast<double>(n);
  return m;
}

// ---------------------------------------------------------------------------
// Downstream augmentation experiment
// ---------------------------------------------------------------------------

struct SeedMetrics {
  uint64_t seed = 0;
  SegMetrics metrics;
};

struct ExperimentCell {
  int64_t n_aug = 0;
  std::string split;
  SegMetrics mean;
  std::vector<SeedMetrics> per_seed;
};

struct ExperimentReport {
  std::vector<int64_t> aug_levels;
  std::vector<uint64_t> seeds;
  std::vector<std::string> splits;
  std::vector<ExperimentCell> cells;  // aug_levels x splits
};

inline const ExperimentCell& find_cell(const ExperimentReport& r, int64_t n_aug,
                                       const std::string& split) {
  for (const auto& c : r.cells) {
    if (c.n_aug == n_aug && c.split == split) return c;
  }
  throw ValidationError("experiment report has no cell (" + std::to_string(n_aug) + ", " + split +
                        ")");
}

inline nlohmann::ordered_json to_json(const SegMetrics& m) {
  return {{"dice", m.dice}, {"iou", m.iou}, {"mae", m.mae}};
}

inline SegMetrics seg_metrics_from_json(const nlohmann::json& j) {
  return {j.at("dice").get<double>(), j.at("iou").get<double>(), j.at("mae").get<double>()};
}

inline nlohmann::ordered_json to_json(const ExperimentReport& r) {
  nlohmann::ordered_json cells = nlohmann::ordered_json::array();
  for (const auto& c : r.cells) {
    nlohmann::ordered_json per_seed = nlohmann::ordered_json::array();
    for (const auto& s : c.per_seed) {
      per_seed.push_back({{"seed", s.seed}, {"metrics", to_json(s.metrics)}});
    }
    cells.push_back(
        {{"n_aug", c.n_aug}, {"split", c.split}, {"mean", to_json(c.mean)}, {"per_seed", per_seed}});
  }
  return {{"aug_levels", r.aug_levels}, {"seeds", r.seeds}, {"splits", r.splits}, {"cells", cells}};
}

inline ExperimentReport experiment_report_from_json(const nlohmann::json& j) {
  ExperimentReport r;
  r.aug_levels = j.at("aug_levels").get<std::vector<int64_t>>();
  r.seeds = j.at("seeds").get<std::vector<uint64_t>>();
  r.splits = j.at("splits").get<std::vector<std::string>>();
  for (const auto& cj : j.at("cells")) {
    ExperimentCell c;
    c.n_aug = cj.at("n_aug").get<int64_t>();
    c.split = cj.at("split").get<std::string>();
    c.mean = seg_metrics_from_json(cj.at("mean"));
    for (const auto& sj : cj.at("per_seed")) {
      c.per_seed.push_back(
          {sj.at("seed").get<uint64_t>(), seg_metrics_from_json(sj.at("metrics"))});
    }
    r.cells.push_back(std::move(c));
  }
  return r;
}

struct DownstreamConfig {
  std::vector<int64_t> aug_levels{0, 1, 3};
  std::vector<uint64_t> seeds{0, 1, 2};
  std::vector<std::string> eval_splits{"val", "test"};
  SegTrainConfig seg;
  uint64_t aug_seed = 9000;
  std::string work_dir;  // augmented sets are written under here
};

/// Table-style downstream experiment: for each augmentation level, build the
/// augmented polyp training set, train the toy segmenter over the configured
/// seeds, and evaluate on each requested split (the test split carries the
/// shifted color/lighting ranges).
inline ExperimentReport run_downstream_experiment(Models& models, const std::string& dataset_root,
                                                  const DownstreamConfig& cfg) {
  if (cfg.work_dir.empty()) throw ConfigError("downstream experiment: work_dir is required");
  if (cfg.seeds.empty() || cfg.aug_levels.empty() || cfg.eval_splits.empty()) {
    throw ConfigError("downstream experiment: empty seeds/levels/splits");
  }
  auto train_set = load_polyp_split(dataset_root, "train");
  std::vector<PolypSplit> eval_sets;
  for (const auto& split : cfg.eval_splits) {
    eval_sets.push_back(load_polyp_split(dataset_root, split));
  }

  ExperimentReport report;
  report.aug_levels = cfg.aug_levels;
  report.seeds = cfg.seeds;
  report.splits = cfg.eval_splits;

  for (auto n_aug : cfg.aug_levels) {
    PolypSplit train_data;
    if (n_aug == 0) {
      train_data = train_set;
    } else {
      auto dir = std::filesystem::path(cfg.work_dir) / ("aug_" + std::to_string(n_aug));
      augment_dataset(models.g, models.f, train_set, n_aug,
                      cfg.aug_seed + static_cast<uint64_t>(n_aug), dir.string());
      train_data = load_augmented(dir.string());
    }

    std::vector<std::vector<SeedMetrics>> per_split(cfg.eval_splits.size());
    for (auto seed : cfg.seeds) {
      auto seg_cfg = cfg.seg;
      seg_cfg.seed = seed;
      auto net = train_toy_segmenter(train_data.images, train_data.masks, seg_cfg);
      for (size_t s = 0; s < eval_sets.size(); ++s) {
        per_split[s].push_back({seed, evaluate_segmenter(net, eval_sets[s].images,
                                                         eval_sets[s].masks)});
      }
    }
    for (size_t s = 0; s < cfg.eval_splits.size(); ++s) {
      ExperimentCell cell;
      cell.n_aug = n_aug;
      cell.split = cfg.eval_splits[s];
      cell.per_seed = per_split[s];
      for (const auto& sm : cell.per_seed) {
        cell.mean.dice += sm.metrics.dice;
        cell.mean.iou += sm.metrics.iou;
        cell.mean.mae += sm.metrics.mae;
      }
      auto k = static_cast<double>(cell.per_seed.size());
      cell.mean.dice /= k;
      cell.mean.iou /= k;
      cell.mean.mae /= k;
      report.cells.push_back(std::move(cell));
    }
  }
  return report;
}

/// Markdown table: one row per augmentation level, Dice/IoU/MAE per split.
inline std::string experiment_markdown(const ExperimentReport& r) {
  std::string md = "| n_aug |";
  for (const auto& s : r.splits) md += " " + s + " Dice | " + s + " IoU | " + s + " MAE |";
  md += "\n|---:|";
  for (size_t i = 0; i < r.splits.size(); ++i) md += "---:|---:|---:|";
  md += "\n";
  char buf[32];
  for (auto n : r.aug_levels) {
    md += "| " + std::to_string(n) + " |";
    for (const auto& s : r.splits) {
      const auto& c = find_cell(r, n, s);
      std::snprintf(buf, sizeof(buf), " %.4f | %.4f | %.4f |", c.mean.dice, c.mean.iou,
                    c.mean.mae);
      md += buf;
    }
    md += "\n";
  }
  return md;
}

// ---------------------------------------------------------------------------
// Disentanglement probe
// ---------------------------------------------------------------------------

/// Mask of the brightest `fraction` of pixels by luminance (specular proxy).
inline torch::Tensor specular_mask(const torch::Tensor& img, double fraction = 0.02) {
  auto lum = luminance01(img);
  int64_t n = lum.numel();
  auto k_top = std::max<int64_t>(1, static_cast<int64_t>(std::llround(fraction * static_cast<double>(n))));
  auto kth = std::get<0>(lum.reshape({-1}).kthvalue(n - k_top + 1));
  return (lum >= kth).to(torch::kFloat32);
}

/// Euclidean distance between the mean RGB vectors (unit space) of two images.
inline double mean_color_displacement(const torch::Tensor& a, const torch::Tensor& b) {
  return (mean_rgb01(a) - mean_rgb01(b)).norm().item<double>();
}

struct ProbeReport {
  double zcl_color_disp = 0;  // mean color displacement when varying z_cl
  double zts_color_disp = 0;  // ... when varying z_ts
  double zcl_spec_iou = 0;    // mean specular-mask IoU when varying z_cl
  double zts_spec_iou = 0;    // ... when varying z_ts
  int64_t trials = 0;
};

inline nlohmann::ordered_json to_json(const ProbeReport& r) {
  return {{"zcl_color_disp", r.zcl_color_disp}, {"zts_color_disp", r.zts_color_disp},
          {"zcl_spec_iou", r.zcl_spec_iou},     {"zts_spec_iou", r.zts_spec_iou},
          {"trials", r.trials}};
}

inline ProbeReport probe_report_from_json(const nlohmann::json& j) {
  ProbeReport r;
  r.zcl_color_disp = j.at("zcl_color_disp").get<double>();
  r.zts_color_disp = j.at("zts_color_disp").get<double>();
  r.zcl_spec_iou = j.at("zcl_spec_iou").get<double>();
  r.zts_spec_iou = j.at("zts_spec_iou").get<double>();
  r.trials = j.at("trials").get<int64_t>();
  return r;
}

/// For fresh VC frames: renders pairs that differ only in z_cl (z_ts fixed)
/// and pairs that differ only in z_ts (z_cl fixed), and reports mean color
/// displacement and specular-mask IoU for both variations.
inline ProbeReport disentanglement_probe(Models& models, int64_t trials, uint64_t seed) {
  if (trials < 1) throw ConfigError("disentanglement_probe: trials must be >= 1");
  torch::NoGradGuard guard;
  int64_t res = models.config.resolution;
  Rng base(seed);
  ProbeReport r;
  r.trials = trials;
  for (int64_t t = 0; t < trials; ++t) {
    Rng stream = base.fork(static_cast<uint64_t>(t));
    auto vc = generate_vc_frame(stream.fork(0).seed(), res).image.unsqueeze(0);
    auto zcl_a = sample_zcl(stream, 1, models.config.d_cl);
    auto zcl_b = sample_zcl(stream, 1, models.config.d_cl);
    auto zcl_fixed = sample_zcl(stream, 1, models.config.d_cl);
    auto zts_fixed = sample_zts(stream, 1, res, models.config.noise_levels);
    auto zts_a = sample_zts(stream, 1, res, models.config.noise_levels);
    auto zts_b = sample_zts(stream, 1, res, models.config.noise_levels);

    auto r1 = models.f->forward(vc, zcl_a, zts_fixed).squeeze(0);
    auto r2 = models.f->forward(vc, zcl_b, zts_fixed).squeeze(0);
    r.zcl_color_disp += mean_color_displacement(r1, r2);
    r.zcl_spec_iou += iou_score(specular_mask(r1), specular_mask(r2));

    auto r3 = models.f->forward(vc, zcl_fixed, zts_a).squeeze(0);
    auto r4 = models.f->forward(vc, zcl_fixed, zts_b).squeeze(0);
    r.zts_color_disp += mean_color_displacement(r3, r4);
    r.zts_spec_iou += iou_score(specular_mask(r3), specular_mask(r4));
  }
  r.zcl_color_disp /= static_cast<double>(trials);
  r.zts_color_disp /= static_cast<double>(trials);
  r.zcl_spec_iou /= static_cast<double>(trials);
  r.zts_spec_iou /= static_cast<double>(trials);
  return r;
}

inline std::string probe_markdown(const ProbeReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof(buf),
                "| varied code | color displacement | specular IoU |\n"
                "|---|---:|---:|\n"
                "| z_cl | %.4f | %.4f |\n"
                "| z_ts | %.4f | %.4f |\n",
                r.zcl_color_disp, r.zcl_spec_iou, r.zts_color_disp, r.zts_spec_iou);
  return buf;
}

}  // namespace lumen

#endif  // LUMEN_EVAL_HPP
