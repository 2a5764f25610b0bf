#ifndef LUMEN_TRAINER_HPP
#define LUMEN_TRAINER_HPP

#include <torch/torch.h>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lumen/checkpoint.hpp"
#include "lumen/codes.hpp"
#include "lumen/common.hpp"
#include "lumen/losses.hpp"
#include "lumen/networks.hpp"
#include "lumen/synth.hpp"

namespace lumen {

struct TrainConfig {
  int64_t epochs = 200;
  int64_t batch_size = 1;
  double learning_rate = 2e-4;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  uint64_t seed = 0;
  int64_t resolution = 64;
  int64_t d_cl = 8;
  int64_t noise_levels = 3;
  int64_t gen_width = 32;
  int64_t disc_width = 64;
  int64_t style_hidden = 128;
  int64_t res_blocks = 9;
  LossWeights weights;
  std::string dataset_root;
  std::string output_dir = "runs/default";
  int64_t checkpoint_every_epochs = 25;
  int64_t max_iterations = -1;  // optional global step cap; -1 = run all epochs

  ModelConfig model_config() const {
    ModelConfig m;
    m.resolution = resolution;
    m.d_cl = d_cl;
    m.noise_levels = noise_levels;
    m.gen_width = gen_width;
    m.disc_width = disc_width;
    m.style_hidden = style_hidden;
    m.res_blocks = res_blocks;
    return m;
  }

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (learning_rate <= 0) throw ConfigError("learning_rate must be positive");
    if (adam_beta1 < 0 || adam_beta1 >= 1 || adam_beta2 < 0 || adam_beta2 >= 1) {
      throw ConfigError("adam betas must lie in [0, 1)");
    }
    if (checkpoint_every_epochs < 0) throw ConfigError("checkpoint_every_epochs must be >= 0");
    weights.validate();
    model_config().validate();
  }
};

inline nlohmann::ordered_json to_json(const TrainConfig& c) {
  return {{"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"learning_rate", c.learning_rate},
          {"adam_beta1", c.adam_beta1},
          {"adam_beta2", c.adam_beta2},
          {"seed", c.seed},
          {"resolution", c.resolution},
          {"d_cl", c.d_cl},
          {"noise_levels", c.noise_levels},
          {"gen_width", c.gen_width},
          {"disc_width", c.disc_width},
          {"style_hidden", c.style_hidden},
          {"res_blocks", c.res_blocks},
          {"lambda_adv", c.weights.lambda_adv},
          {"lambda_cyc", c.weights.lambda_cyc},
          {"lambda_t", c.weights.lambda_t},
          {"lambda_idt", c.weights.lambda_idt},
          {"alpha", c.weights.alpha},
          {"dataset_root", c.dataset_root},
          {"output_dir", c.output_dir},
          {"checkpoint_every_epochs", c.checkpoint_every_epochs},
          {"max_iterations", c.max_iterations}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.epochs = j.at("epochs").get<int64_t>();
  c.batch_size = j.at("batch_size").get<int64_t>();
  c.learning_rate = j.at("learning_rate").get<double>();
  c.adam_beta1 = j.at("adam_beta1").get<double>();
  c.adam_beta2 = j.at("adam_beta2").get<double>();
  c.seed = j.at("seed").get<uint64_t>();
  c.resolution = j.at("resolution").get<int64_t>();
  c.d_cl = j.at("d_cl").get<int64_t>();
  c.noise_levels = j.at("noise_levels").get<int64_t>();
  c.gen_width = j.at("gen_width").get<int64_t>();
  c.disc_width = j.at("disc_width").get<int64_t>();
  c.style_hidden = j.at("style_hidden").get<int64_t>();
  c.res_blocks = j.at("res_blocks").get<int64_t>();
  c.weights.lambda_adv = j.at("lambda_adv").get<double>();
  c.weights.lambda_cyc = j.at("lambda_cyc").get<double>();
  c.weights.lambda_t = j.at("lambda_t").get<double>();
  c.weights.lambda_idt = j.at("lambda_idt").get<double>();
  c.weights.alpha = j.at("alpha").get<double>();
  c.dataset_root = j.at("dataset_root").get<std::string>();
  c.output_dir = j.at("output_dir").get<std::string>();
  c.checkpoint_every_epochs = j.at("checkpoint_every_epochs").get<int64_t>();
  c.max_iterations = j.at("max_iterations").get<int64_t>();
  return c;
}

namespace detail {

inline std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r");
  auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

inline int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    size_t idx = 0;
    auto r = std::stoll(v, &idx);
    if (idx != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': invalid integer '" + v + "'");
  }
}

inline uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    size_t idx = 0;
    auto r = std::stoull(v, &idx);
    if (idx != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': invalid unsigned integer '" + v + "'");
  }
}

inline double parse_real(const std::string& key, const std::string& v) {
  try {
    size_t idx = 0;
    auto r = std::stod(v, &idx);
    if (idx != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': invalid real '" + v + "'");
  }
}

}  // namespace detail

/// Parses the flat `key = value` training config format. Lines starting with
/// '#' and blank lines are ignored; unknown keys are rejected.
inline TrainConfig parse_train_config_text(const std::string& text) {
  TrainConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto t = detail::trim(line);
    if (t.empty() || t[0] == '#') continue;
    auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    }
    auto key = detail::trim(t.substr(0, eq));
    auto val = detail::trim(t.substr(eq + 1));
    if (key.empty() || val.empty()) {
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
    }
    if (key == "epochs") c.epochs = detail::parse_int(key, val);
    else if (key == "batch_size") c.batch_size = detail::parse_int(key, val);
    else if (key == "learning_rate") c.learning_rate = detail::parse_real(key, val);
    else if (key == "adam_beta1") c.adam_beta1 = detail::parse_real(key, val);
    else if (key == "adam_beta2") c.adam_beta2 = detail::parse_real(key, val);
    else if (key == "seed") c.seed = detail::parse_uint(key, val);
    else if (key == "resolution") c.resolution = detail::parse_int(key, val);
    else if (key == "d_cl") c.d_cl = detail::parse_int(key, val);
    else if (key == "noise_levels") c.noise_levels = detail::parse_int(key, val);
    else if (key == "gen_width") c.gen_width = detail::parse_int(key, val);
    else if (key == "disc_width") c.disc_width = detail::parse_int(key, val);
    else if (key == "style_hidden") c.style_hidden = detail::parse_int(key, val);
    else if (key == "res_blocks") c.res_blocks = detail::parse_int(key, val);
    else if (key == "lambda_adv") c.weights.lambda_adv = detail::parse_real(key, val);
    else if (key == "lambda_cyc") c.weights.lambda_cyc = detail::parse_real(key, val);
    else if (key == "lambda_t") c.weights.lambda_t = detail::parse_real(key, val);
    else if (key == "lambda_idt") c.weights.lambda_idt = detail::parse_real(key, val);
    else if (key == "alpha") c.weights.alpha = detail::parse_real(key, val);
    else if (key == "dataset_root") c.dataset_root = val;
    else if (key == "output_dir") c.output_dir = val;
    else if (key == "checkpoint_every_epochs") c.checkpoint_every_epochs = detail::parse_int(key, val);
    else if (key == "max_iterations") c.max_iterations = detail::parse_int(key, val);
    else throw ConfigError("unknown config key: " + key);
  }
  c.validate();
  return c;
}

inline TrainConfig parse_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open train config: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_train_config_text(ss.str());
}

/// Learning-rate multiplier: 1 for the first half of training, then linear
/// decay toward 0 over the final half.
inline double lr_factor(int64_t epoch, int64_t total_epochs) {
  if (total_epochs <= 0) return 1.0;
  int64_t half = total_epochs / 2;
  if (epoch < half) return 1.0;
  return static_cast<double>(total_epochs - epoch) / static_cast<double>(total_epochs - half);
}

inline void set_requires_grad(torch::nn::Module& m, bool value) {
  for (auto& p : m.parameters()) p.set_requires_grad(value);
}

/// Fixed run-directory layout shared by the trainer and the CLI.
inline std::string loss_log_path(const std::string& output_dir) {
  return (std::filesystem::path(output_dir) / "logs" / "loss_log.jsonl").string();
}

inline std::string final_checkpoint_path(const std::string& output_dir) {
  return (std::filesystem::path(output_dir) / "checkpoints" / "ckpt_final.bin").string();
}

namespace detail {

inline std::vector<torch::Tensor> optimizer_params(const torch::optim::Optimizer& opt) {
  std::vector<torch::Tensor> ps;
  for (const auto& group : opt.param_groups()) {
    for (const auto& p : group.params()) ps.push_back(p);
  }
  return ps;
}

/// Serializes Adam moment buffers and step counters in parameter order.
/// Parameters without state yet are marked with step -1.
inline void collect_adam_state(const std::string& prefix, torch::optim::Adam& opt,
                               std::vector<NamedTensor>& out) {
  auto params = optimizer_params(opt);
  auto steps = torch::full({static_cast<int64_t>(params.size())}, -1, torch::kInt64);
  auto steps_acc = steps.accessor<int64_t, 1>();
  for (size_t i = 0; i < params.size(); ++i) {
    auto it = opt.state().find(params[i].unsafeGetTensorImpl());
    if (it == opt.state().end()) continue;
    auto& s = static_cast<torch::optim::AdamParamState&>(*it->second);
    steps_acc[static_cast<int64_t>(i)] = s.step();
    out.push_back({prefix + "/p" + std::to_string(i) + ".exp_avg", s.exp_avg().detach().clone()});
    out.push_back(
        {prefix + "/p" + std::to_string(i) + ".exp_avg_sq", s.exp_avg_sq().detach().clone()});
  }
  out.push_back({prefix + "/steps", steps});
}

inline const torch::Tensor* find_tensor(const std::vector<NamedTensor>& tensors,
                                        const std::string& name) {
  for (const auto& nt : tensors) {
    if (nt.name == name) return &nt.tensor;
  }
  return nullptr;
}

inline void restore_adam_state(const std::string& prefix, torch::optim::Adam& opt,
                               const std::vector<NamedTensor>& tensors) {
  auto params = optimizer_params(opt);
  auto* steps = find_tensor(tensors, prefix + "/steps");
  if (!steps) throw IntegrityError("checkpoint missing optimizer state: " + prefix);
  if (steps->numel() != static_cast<int64_t>(params.size())) {
    throw IntegrityError("optimizer parameter count mismatch: " + prefix);
  }
  auto steps_acc = steps->accessor<int64_t, 1>();
  opt.state().clear();
  for (size_t i = 0; i < params.size(); ++i) {
    auto step = steps_acc[static_cast<int64_t>(i)];
    if (step < 0) continue;
    auto* avg = find_tensor(tensors, prefix + "/p" + std::to_string(i) + ".exp_avg");
    auto* avg_sq = find_tensor(tensors, prefix + "/p" + std::to_string(i) + ".exp_avg_sq");
    if (!avg || !avg_sq) throw IntegrityError("checkpoint missing Adam moments: " + prefix);
    auto state = std::make_unique<torch::optim::AdamParamState>();
    state->step(step);
    state->exp_avg(avg->clone());
    state->exp_avg_sq(avg_sq->clone());
    opt.state()[params[i].unsafeGetTensorImpl()] = std::move(state);
  }
}

}  // namespace detail

/// Restores model parameters from a checkpoint container, refusing on any
/// architecture mismatch.
inline void restore_models(const Container& c, Models& m) {
  auto mc = model_config_from_json(c.config.at("model"));
  if (!(mc == m.config)) {
    throw ConfigError("checkpoint model config is incompatible with the target models");
  }
  restore_parameters("g", *m.g, c.tensors);
  restore_parameters("f", *m.f, c.tensors);
  restore_parameters("d_g", *m.d_g, c.tensors);
  restore_parameters("d_f", *m.d_f, c.tensors);
  restore_parameters("d_rec", *m.d_rec, c.tensors);
}

/// Loads the model set of a checkpoint for inference-style use.
inline Models load_models_from_checkpoint(const std::string& path) {
  auto c = load_container(path);
  auto mc = model_config_from_json(c.config.at("model"));
  auto m = make_models(mc, 0);
  restore_models(c, m);
  return m;
}

inline TrainConfig train_config_from_checkpoint(const std::string& path) {
  return train_config_from_json(load_container(path).config.at("train"));
}

/// Adversarial training loop. One step runs, in order: the forward cycle
/// (OC -> G -> F reconstruction plus the reconstruction-adversarial pair), the
/// backward cycle (VC rendered by F with sampled codes, recovered by G, with
/// the texture-diversity hinge between two z_ts draws), the identity term, a
/// single generator update, then the three discriminator updates on detached
/// images. Per-step code draws follow a fixed order (z_cl, z_ts-1, recon z_cl,
/// recon z_ts, z_ts-2) and are taken unconditionally, so changing loss weights
/// never shifts the sampled code stream between otherwise identical runs.
class Trainer {
 public:
  explicit Trainer(TrainConfig cfg)
      : cfg_(std::move(cfg)), rng_(Rng(cfg_.seed).fork(2)) {
    cfg_.validate();
    torch::set_num_threads(1);
    models_ = make_models(cfg_.model_config(), cfg_.seed);
    auto opts = torch::optim::AdamOptions(cfg_.learning_rate)
                    .betas(std::make_tuple(cfg_.adam_beta1, cfg_.adam_beta2));
    auto gen_params = models_.g->parameters();
    auto f_params = models_.f->parameters();
    gen_params.insert(gen_params.end(), f_params.begin(), f_params.end());
    opt_gen_ = std::make_unique<torch::optim::Adam>(gen_params, opts);
    opt_dg_ = std::make_unique<torch::optim::Adam>(models_.d_g->parameters(), opts);
    opt_df_ = std::make_unique<torch::optim::Adam>(models_.d_f->parameters(), opts);
    opt_drec_ = std::make_unique<torch::optim::Adam>(models_.d_rec->parameters(), opts);
  }

  static Trainer from_checkpoint(const std::string& path) {
    auto c = load_container(path);
    Trainer t(train_config_from_json(c.config.at("train")));
    t.restore_from(c);
    return t;
  }

  /// Executes one optimization step on a pair of batches.
  LossReport step(const torch::Tensor& oc, const torch::Tensor& vc) {
    const auto& w = cfg_.weights;
    int64_t batch = oc.size(0);

    // All per-step draws happen unconditionally and in a fixed order, so
    // weight settings never shift the code stream; lambda_t only controls
    // whether the second texture render is computed.
    auto zcl = sample_zcl(rng_, batch, cfg_.d_cl);
    auto zts1 = sample_zts(rng_, batch, cfg_.resolution, cfg_.noise_levels);
    auto rec_zcl = sample_zcl(rng_, batch, cfg_.d_cl);
    auto rec_zts = sample_zts(rng_, batch, cfg_.resolution, cfg_.noise_levels);
    auto zts2 = sample_zts(rng_, batch, cfg_.resolution, cfg_.noise_levels);
    bool texture_branch = w.lambda_t > 0.0 || force_texture_branch;

    set_requires_grad(*models_.d_g, false);
    set_requires_grad(*models_.d_f, false);
    set_requires_grad(*models_.d_rec, false);

    // (a) forward cycle.
    auto g_out = models_.g->forward(oc);
    auto rec_oc = models_.f->forward(g_out.image, g_out.zcl_hat, g_out.zts_hat);
    auto cyc_oc = mean_abs(oc, rec_oc);
    auto render_rec = models_.f->forward(g_out.image, rec_zcl, rec_zts);
    auto adv_rec = bce_logits_mean(models_.d_rec->forward(render_rec), 1.0);
    auto adv_g = bce_logits_mean(models_.d_g->forward(g_out.image), 1.0);

    // (b) backward cycle.
    auto fake_oc = models_.f->forward(vc, zcl, zts1);
    auto b_out = models_.g->forward(fake_oc);
    auto cyc_vc_img = mean_abs(vc, b_out.image);
    auto cyc_vc_zcl = mean_abs(zcl, b_out.zcl_hat);
    auto cyc_vc_zts = torch::zeros({}, torch::kFloat32);
    for (size_t k = 0; k < zts1.size(); ++k) {
      cyc_vc_zts = cyc_vc_zts + mean_abs(zts1[k], b_out.zts_hat[k]);
    }
    cyc_vc_zts = cyc_vc_zts / static_cast<double>(zts1.size());
    auto adv_f = bce_logits_mean(models_.d_f->forward(fake_oc), 1.0);

    auto text = torch::zeros({}, torch::kFloat32);
    if (texture_branch) {
      auto fake_oc2 = models_.f->forward(vc, zcl, zts2);
      text = texture_loss(fake_oc, fake_oc2, w.alpha);
    }

    // (c) identity term on the VC domain.
    auto idt = mean_abs(vc, models_.g->forward(vc).image);

    // (d) one generator update on the combined objective.
    ObjectiveTerms terms{adv_g, adv_f,      adv_rec,    cyc_oc, cyc_vc_img,
                         cyc_vc_zcl, cyc_vc_zts, text,   idt};
    torch::Tensor total;
    try {
      total = total_objective(terms, w);
    } catch (const DivergenceError& e) {
      throw DivergenceError(std::string(e.what()) + " at iteration " +
                            std::to_string(iteration_));
    }
    opt_gen_->zero_grad();
    total.backward();
    opt_gen_->step();
    opt_gen_->zero_grad();

    set_requires_grad(*models_.d_g, true);
    set_requires_grad(*models_.d_f, true);
    set_requires_grad(*models_.d_rec, true);

    // (e) discriminator updates on detached images.
    auto d_g_loss = bce_logits_mean(models_.d_g->forward(vc), 1.0) +
                    bce_logits_mean(models_.d_g->forward(g_out.image.detach()), 0.0);
    auto d_f_loss = bce_logits_mean(models_.d_f->forward(oc), 1.0) +
                    bce_logits_mean(models_.d_f->forward(fake_oc.detach()), 0.0);
    auto d_rec_loss = bce_logits_mean(models_.d_rec->forward(rec_oc.detach()), 1.0) +
                      bce_logits_mean(models_.d_rec->forward(render_rec.detach()), 0.0);
    auto d_step = [](torch::optim::Adam& opt, const torch::Tensor& loss) {
      opt.zero_grad();
      loss.backward();
      opt.step();
      opt.zero_grad();
    };
    d_step(*opt_dg_, d_g_loss);
    d_step(*opt_df_, d_f_loss);
    d_step(*opt_drec_, d_rec_loss);

    LossReport r;
    r.adv_g = adv_g.item<double>();
    r.adv_f = adv_f.item<double>();
    r.adv_rec = adv_rec.item<double>();
    r.cyc_oc = cyc_oc.item<double>();
    r.cyc_vc_img = cyc_vc_img.item<double>();
    r.cyc_vc_zcl = cyc_vc_zcl.item<double>();
    r.cyc_vc_zts = cyc_vc_zts.item<double>();
    r.text = text.item<double>();
    r.idt = idt.item<double>();
    r.d_g = d_g_loss.item<double>();
    r.d_f = d_f_loss.item<double>();
    r.d_rec = d_rec_loss.item<double>();
    r.total = total.item<double>();
    for (double v : {r.d_g, r.d_f, r.d_rec}) {
      if (!std::isfinite(v)) {
        throw DivergenceError("non-finite loss term: discriminator at iteration " +
                              std::to_string(iteration_));
      }
    }
    return r;
  }

  /// Runs the configured training schedule; returns the final checkpoint path.
  std::string train() {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(cfg_.output_dir) / "logs");
    fs::create_directories(fs::path(cfg_.output_dir) / "checkpoints");
    auto log_path = loss_log_path(cfg_.output_dir);
    std::ofstream log(log_path, resumed_ ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open loss log: " + log_path);

    auto oc_data = load_split_images(cfg_.dataset_root, "oc", "train");
    auto vc_data = load_split_images(cfg_.dataset_root, "vc", "train");
    int64_t n = std::min(oc_data.size(0), vc_data.size(0));
    int64_t steps_per_epoch = n / cfg_.batch_size;
    if (steps_per_epoch < 1) throw ConfigError("dataset smaller than one batch");

    bool stopped = false;
    while (epoch_ < cfg_.epochs && !stopped) {
      set_lr(cfg_.learning_rate * lr_factor(epoch_, cfg_.epochs));
      // The per-epoch order is a pure function of (seed, epoch), so a resumed
      // run re-derives the exact order the interrupted run was walking.
      make_epoch_orders(n);
      for (; step_in_epoch_ < steps_per_epoch; ++step_in_epoch_) {
        if (cfg_.max_iterations >= 0 && iteration_ >= cfg_.max_iterations) {
          stopped = true;
          break;
        }
        auto oc_batch = gather_batch(oc_data, oc_order_, step_in_epoch_);
        auto vc_batch = gather_batch(vc_data, vc_order_, step_in_epoch_);
        auto report = step(oc_batch, vc_batch);
        log << report_to_json(report, iteration_).dump() << "\n";
        log.flush();
        ++iteration_;
      }
      if (stopped) break;
      ++epoch_;
      step_in_epoch_ = 0;
      if (cfg_.checkpoint_every_epochs > 0 && epoch_ % cfg_.checkpoint_every_epochs == 0) {
        char buf[32];
        std::snprintf(buf, sizeof(buf), "ckpt_epoch_%04lld.bin",
                      static_cast<long long>(epoch_));
        save_checkpoint((fs::path(cfg_.output_dir) / "checkpoints" / buf).string());
      }
    }
    auto final_path = final_checkpoint_path(cfg_.output_dir);
    save_checkpoint(final_path);
    return final_path;
  }

  void save_checkpoint(const std::string& path) {
    Container c;
    c.config = {{"artifact_version", kArtifactVersion},
                {"model", to_json(cfg_.model_config())},
                {"train", to_json(cfg_)}};
    collect_parameters("g", *models_.g, c.tensors);
    collect_parameters("f", *models_.f, c.tensors);
    collect_parameters("d_g", *models_.d_g, c.tensors);
    collect_parameters("d_f", *models_.d_f, c.tensors);
    collect_parameters("d_rec", *models_.d_rec, c.tensors);
    detail::collect_adam_state("opt_gen", *opt_gen_, c.tensors);
    detail::collect_adam_state("opt_dg", *opt_dg_, c.tensors);
    detail::collect_adam_state("opt_df", *opt_df_, c.tensors);
    detail::collect_adam_state("opt_drec", *opt_drec_, c.tensors);
    c.extra = {{"iteration", iteration_},
               {"epoch", epoch_},
               {"step_in_epoch", step_in_epoch_},
               {"rng", rng_.serialize()}};
    save_container(c, path);
  }

  Models& models() { return models_; }
  const TrainConfig& config() const { return cfg_; }
  Rng& rng() { return rng_; }
  int64_t iteration() const { return iteration_; }

  /// Adjusts the step cap after construction, e.g. to continue a resumed run
  /// past the cap embedded in its checkpoint.
  void set_max_iterations(int64_t v) { cfg_.max_iterations = v; }

  /// Test knob: compute the second texture branch even when lambda_t == 0.
  bool force_texture_branch = false;

 private:
  void restore_from(const Container& c) {
    restore_models(c, models_);
    detail::restore_adam_state("opt_gen", *opt_gen_, c.tensors);
    detail::restore_adam_state("opt_dg", *opt_dg_, c.tensors);
    detail::restore_adam_state("opt_df", *opt_df_, c.tensors);
    detail::restore_adam_state("opt_drec", *opt_drec_, c.tensors);
    iteration_ = c.extra.at("iteration").get<int64_t>();
    epoch_ = c.extra.at("epoch").get<int64_t>();
    step_in_epoch_ = c.extra.at("step_in_epoch").get<int64_t>();
    rng_.restore(c.extra.at("rng").get<std::string>());
    resumed_ = true;
  }

  void make_epoch_orders(int64_t n) {
    oc_order_.resize(static_cast<size_t>(n));
    vc_order_.resize(static_cast<size_t>(n));
    std::iota(oc_order_.begin(), oc_order_.end(), 0);
    std::iota(vc_order_.begin(), vc_order_.end(), 0);
    auto order_rng = Rng(cfg_.seed).fork(3).fork(static_cast<uint64_t>(epoch_));
    order_rng.shuffle(oc_order_);
    order_rng.shuffle(vc_order_);
  }

  torch::Tensor gather_batch(const torch::Tensor& data, const std::vector<int64_t>& order,
                             int64_t step) const {
    auto idx = torch::empty({cfg_.batch_size}, torch::kInt64);
    auto acc = idx.accessor<int64_t, 1>();
    for (int64_t b = 0; b < cfg_.batch_size; ++b) {
      acc[b] = order[static_cast<size_t>(step * cfg_.batch_size + b)];
    }
    return data.index_select(0, idx);
  }

  void set_lr(double lr) {
    for (auto* opt : {opt_gen_.get(), opt_dg_.get(), opt_df_.get(), opt_drec_.get()}) {
      for (auto& group : opt->param_groups()) {
        static_cast<torch::optim::AdamOptions&>(group.options()).lr(lr);
      }
    }
  }

  TrainConfig cfg_;
  Models models_;
  std::unique_ptr<torch::optim::Adam> opt_gen_, opt_dg_, opt_df_, opt_drec_;
  Rng rng_;
  int64_t iteration_ = 0;
  int64_t epoch_ = 0;
  int64_t step_in_epoch_ = 0;
  std::vector<int64_t> oc_order_, vc_order_;
  bool resumed_ = false;
};

}  // namespace lumen

#endif  // LUMEN_TRAINER_HPP
