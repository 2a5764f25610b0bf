#ifndef LUMEN_NETWORKS_HPP
#define LUMEN_NETWORKS_HPP

#include <torch/torch.h>

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "lumen/common.hpp"

namespace lumen {

/// Architecture hyperparameters. noise_levels is fixed at 3 because the three
/// injection sites (post-stem, post-residual-stack, post-first-upsample) are
/// part of the architecture contract.
struct ModelConfig {
  int64_t resolution = 64;
  int64_t d_cl = 8;
  int64_t noise_levels = 3;
  int64_t gen_width = 32;
  int64_t disc_width = 64;
  int64_t style_hidden = 128;
  int64_t res_blocks = 9;

  void validate() const {
    if (resolution < 32 || (resolution & (resolution - 1)) != 0) {
      throw ConfigError("model resolution must be a power of 2 and >= 32");
    }
    if (d_cl < 1) throw ConfigError("d_cl must be positive");
    if (noise_levels != 3) throw ConfigError("noise_levels must be 3");
    if (gen_width < 4 || disc_width < 4) throw ConfigError("network widths must be >= 4");
    if (style_hidden < 1) throw ConfigError("style_hidden must be positive");
    if (res_blocks < 1) throw ConfigError("res_blocks must be positive");
  }

  bool operator==(const ModelConfig&) const = default;
};

inline nlohmann::ordered_json to_json(const ModelConfig& c) {
  return {{"resolution", c.resolution}, {"d_cl", c.d_cl},
          {"noise_levels", c.noise_levels}, {"gen_width", c.gen_width},
          {"disc_width", c.disc_width}, {"style_hidden", c.style_hidden},
          {"res_blocks", c.res_blocks}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.resolution = j.at("resolution").get<int64_t>();
  c.d_cl = j.at("d_cl").get<int64_t>();
  c.noise_levels = j.at("noise_levels").get<int64_t>();
  c.gen_width = j.at("gen_width").get<int64_t>();
  c.disc_width = j.at("disc_width").get<int64_t>();
  c.style_hidden = j.at("style_hidden").get<int64_t>();
  c.res_blocks = j.at("res_blocks").get<int64_t>();
  return c;
}

inline constexpr double kAdainEps = 1e-5;

/// Adaptive instance normalization: per-channel spatial whitening (population
/// standard deviation) followed by the style affine. Accepts [B,C,H,W] with
/// [B,C] styles or [C,H,W] with [C] styles.
inline torch::Tensor adain(const torch::Tensor& features, const torch::Tensor& gamma,
                           const torch::Tensor& beta, double eps = kAdainEps) {
  if (eps <= 0.0) throw ValidationError("adain: eps must be positive");
  bool batched = features.dim() == 4;
  if (!batched && features.dim() != 3) {
    throw ValidationError("adain: features must be [B,C,H,W] or [C,H,W]");
  }
  int64_t channels = features.size(batched ? 1 : 0);
  auto check_style = [&](const torch::Tensor& s, const char* name) {
    bool ok = batched ? (s.dim() == 2 && s.size(1) == channels)
                      : (s.dim() == 1 && s.size(0) == channels);
    if (!ok) throw ValidationError(std::string("adain: ") + name + " shape mismatch");
  };
  check_style(gamma, "gamma");
  check_style(beta, "beta");

  auto mu = features.mean({-2, -1}, /*keepdim=*/true);
  auto centered = features - mu;
  // Tiny variance floor keeps sqrt differentiable on constant channels; the
  // resulting sigma offset (<=1e-6) is far inside the stats tolerances.
  auto sigma = (centered * centered).mean({-2, -1}, /*keepdim=*/true).add(1e-12).sqrt();
  auto view = batched ? std::vector<int64_t>{-1, channels, 1, 1}
                      : std::vector<int64_t>{channels, 1, 1};
  return gamma.reshape(view) * (centered / (sigma + eps)) + beta.reshape(view);
}

/// Additive spatial noise: a learned bias-free 1->C convolution of the noise
/// map added to the features. Zero noise is an exact no-op.
struct NoiseInjectionImpl : torch::nn::Module {
  torch::nn::Conv2d conv{nullptr};

  explicit NoiseInjectionImpl(int64_t channels)
      : conv(register_module(
            "conv", torch::nn::Conv2d(
                        torch::nn::Conv2dOptions(1, channels, 3).padding(1).bias(false)))) {}

  torch::Tensor forward(const torch::Tensor& features, const torch::Tensor& z) {
    if (z.dim() != 4 || z.size(1) != 1) {
      throw ValidationError("inject_noise: noise map must be [B,1,H,W]");
    }
    if (z.size(2) != features.size(2) || z.size(3) != features.size(3)) {
      throw ValidationError("inject_noise: noise resolution does not match features");
    }
    return features + conv->forward(z);
  }
};
TORCH_MODULE(NoiseInjection);

/// Maps z_cl to one (gamma, beta) pair per AdaIn site: a 3-layer ReLU trunk
/// and one linear head per site. Gamma is parameterized as (1 + raw), so the
/// neutral point of every site is plain instance normalization and the heads
/// learn offsets around it.
struct StyleMlpImpl : torch::nn::Module {
  torch::nn::Linear fc1{nullptr}, fc2{nullptr}, fc3{nullptr};
  std::vector<torch::nn::Linear> heads;
  int64_t channels;

  StyleMlpImpl(int64_t d_cl, int64_t hidden, int64_t sites, int64_t site_channels)
      : channels(site_channels) {
    fc1 = register_module("fc1", torch::nn::Linear(d_cl, hidden));
    fc2 = register_module("fc2", torch::nn::Linear(hidden, hidden));
    fc3 = register_module("fc3", torch::nn::Linear(hidden, hidden));
    for (int64_t i = 0; i < sites; ++i) {
      heads.push_back(register_module("head" + std::to_string(i),
                                      torch::nn::Linear(hidden, 2 * site_channels)));
    }
  }

  /// One (gamma, beta) pair ([B,C] each) per site.
  std::vector<std::pair<torch::Tensor, torch::Tensor>> forward(const torch::Tensor& zcl) {
    auto h = torch::relu(fc1->forward(zcl));
    h = torch::relu(fc2->forward(h));
    h = torch::relu(fc3->forward(h));
    std::vector<std::pair<torch::Tensor, torch::Tensor>> out;
    out.reserve(heads.size());
    for (auto& head : heads) {
      auto raw = head->forward(h);
      out.emplace_back(1.0 + raw.narrow(1, 0, channels), raw.narrow(1, channels, channels));
    }
    return out;
  }

  /// Fan-in-scaled init for the whole style path. The backbone's 0.02-std
  /// convention, applied to a deep MLP, attenuates z_cl by orders of
  /// magnitude before it reaches the heads, leaving the color code without
  /// practical influence or usable gradient early in training. He scaling on
  /// the ReLU trunk and 1/sqrt(fan_in) on the heads gives O(1) modulation
  /// around the neutral (gamma, beta) point from the first step.
  void init_parameters() {
    torch::NoGradGuard guard;
    auto scale = [](torch::nn::Linear& l, double gain) {
      auto fan_in = static_cast<double>(l->weight.size(1));
      l->weight.normal_(0.0, std::sqrt(gain / fan_in));
      l->bias.zero_();
    };
    scale(fc1, 2.0);
    scale(fc2, 2.0);
    scale(fc3, 2.0);
    for (auto& head : heads) scale(head, 1.0);
  }
};
TORCH_MODULE(StyleMlp);

namespace detail {

inline torch::nn::Conv2d reflect_conv(int64_t in, int64_t out, int64_t k) {
  return torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, k)
                               .padding((k - 1) / 2)
                               .padding_mode(torch::kReflect));
}

inline torch::Tensor instance_norm(const torch::Tensor& x) {
  return torch::instance_norm(x, {}, {}, {}, {}, /*use_input_stats=*/true,
                              /*momentum=*/0.0, /*eps=*/kAdainEps, /*cudnn_enabled=*/false);
}

}  // namespace detail

/// Residual block whose two normalization sites are AdaIn, driven by styles.
struct AdainResBlockImpl : torch::nn::Module {
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};

  explicit AdainResBlockImpl(int64_t ch)
      : conv1(register_module("conv1", detail::reflect_conv(ch, ch, 3))),
        conv2(register_module("conv2", detail::reflect_conv(ch, ch, 3))) {}

  torch::Tensor forward(const torch::Tensor& x,
                        const std::pair<torch::Tensor, torch::Tensor>& s1,
                        const std::pair<torch::Tensor, torch::Tensor>& s2) {
    auto h = torch::relu(adain(conv1->forward(x), s1.first, s1.second));
    h = adain(conv2->forward(h), s2.first, s2.second);
    return x + h;
  }
};
TORCH_MODULE(AdainResBlock);

/// Plain instance-norm residual block (used by G, which takes no style code).
struct ResBlockImpl : torch::nn::Module {
  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};

  explicit ResBlockImpl(int64_t ch)
      : conv1(register_module("conv1", detail::reflect_conv(ch, ch, 3))),
        conv2(register_module("conv2", detail::reflect_conv(ch, ch, 3))) {}

  torch::Tensor forward(const torch::Tensor& x) {
    auto h = torch::relu(detail::instance_norm(conv1->forward(x)));
    h = detail::instance_norm(conv2->forward(h));
    return x + h;
  }
};
TORCH_MODULE(ResBlock);

namespace detail {

inline void check_image_input(const torch::Tensor& x, const ModelConfig& cfg, const char* who) {
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != cfg.resolution ||
      x.size(3) != cfg.resolution) {
    throw ValidationError(std::string(who) + ": input must be [B,3," +
                          std::to_string(cfg.resolution) + "," + std::to_string(cfg.resolution) +
                          "]");
  }
}

inline void check_codes(const torch::Tensor& zcl, const std::vector<torch::Tensor>& zts,
                        int64_t batch, const ModelConfig& cfg, const char* who) {
  if (zcl.dim() != 2 || zcl.size(0) != batch || zcl.size(1) != cfg.d_cl) {
    throw ValidationError(std::string(who) + ": zcl must be [B," + std::to_string(cfg.d_cl) + "]");
  }
  if (static_cast<int64_t>(zts.size()) != cfg.noise_levels) {
    throw ValidationError(std::string(who) + ": zts must have " +
                          std::to_string(cfg.noise_levels) + " levels");
  }
  for (int64_t k = 0; k < cfg.noise_levels; ++k) {
    int64_t r = cfg.resolution >> k;
    const auto& z = zts[static_cast<size_t>(k)];
    if (z.dim() != 4 || z.size(0) != batch || z.size(1) != 1 || z.size(2) != r || z.size(3) != r) {
      throw ValidationError(std::string(who) + ": zts level " + std::to_string(k) +
                            " must be [B,1," + std::to_string(r) + "," + std::to_string(r) + "]");
    }
  }
}

}  // namespace detail

/// F: (VC image, z_cl, z_ts) -> OC-style image. ResNet-9 generator; every
/// normalization inside the residual stack is AdaIn driven by z_cl; z_ts is
/// injected post-stem (full res, level 0), post-residual-stack (quarter res,
/// level 2) and post-first-upsample (half res, level 1).
struct GeneratorFImpl : torch::nn::Module {
  ModelConfig cfg;
  torch::nn::Conv2d stem{nullptr}, down1{nullptr}, down2{nullptr}, head{nullptr};
  torch::nn::ConvTranspose2d up1{nullptr}, up2{nullptr};
  std::vector<AdainResBlock> blocks;
  NoiseInjection inject0{nullptr}, inject1{nullptr}, inject2{nullptr};
  StyleMlp style{nullptr};

  explicit GeneratorFImpl(const ModelConfig& config) : cfg(config) {
    cfg.validate();
    int64_t w = cfg.gen_width;
    stem = register_module("stem", detail::reflect_conv(3, w, 7));
    down1 = register_module(
        "down1", torch::nn::Conv2d(torch::nn::Conv2dOptions(w, 2 * w, 3).stride(2).padding(1)));
    down2 = register_module(
        "down2",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * w, 4 * w, 3).stride(2).padding(1)));
    for (int64_t i = 0; i < cfg.res_blocks; ++i) {
      blocks.push_back(register_module("block" + std::to_string(i), AdainResBlock(4 * w)));
    }
    up1 = register_module("up1",
                          torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(4 * w, 2 * w, 3)
                                                         .stride(2)
                                                         .padding(1)
                                                         .output_padding(1)));
    up2 = register_module("up2",
                          torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(2 * w, w, 3)
                                                         .stride(2)
                                                         .padding(1)
                                                         .output_padding(1)));
    head = register_module("head", detail::reflect_conv(w, 3, 7));
    inject0 = register_module("inject0", NoiseInjection(w));
    inject1 = register_module("inject1", NoiseInjection(2 * w));
    inject2 = register_module("inject2", NoiseInjection(4 * w));
    style = register_module(
        "style", StyleMlp(cfg.d_cl, cfg.style_hidden, 2 * cfg.res_blocks, 4 * w));
  }

  torch::Tensor forward(const torch::Tensor& vc, const torch::Tensor& zcl,
                        const std::vector<torch::Tensor>& zts) {
    detail::check_image_input(vc, cfg, "forward_F");
    detail::check_codes(zcl, zts, vc.size(0), cfg, "forward_F");

    auto styles = style->forward(zcl);
    auto x = torch::relu(detail::instance_norm(stem->forward(vc)));
    x = inject0->forward(x, zts[0]);
    x = torch::relu(detail::instance_norm(down1->forward(x)));
    x = torch::relu(detail::instance_norm(down2->forward(x)));
    for (size_t i = 0; i < blocks.size(); ++i) {
      x = blocks[i]->forward(x, styles[2 * i], styles[2 * i + 1]);
    }
    x = inject2->forward(x, zts[2]);
    x = torch::relu(detail::instance_norm(up1->forward(x)));
    x = inject1->forward(x, zts[1]);
    x = torch::relu(detail::instance_norm(up2->forward(x)));
    return torch::tanh(head->forward(x));
  }
};
TORCH_MODULE(GeneratorF);

struct GeneratorOutputs {
  torch::Tensor image;                 // [B,3,R,R] in [-1,1]
  torch::Tensor zcl_hat;               // [B,d_cl] in [-1,1]
  std::vector<torch::Tensor> zts_hat;  // level k: [B,1,R/2^k,R/2^k] in [-1,1]
};

/// G: OC image -> (VC image, predicted z_cl, predicted z_ts). Shared ResNet-9
/// backbone; code heads read the decoder features at each level's resolution,
/// z_cl via global average pooling of the deepest features.
struct GeneratorGImpl : torch::nn::Module {
  ModelConfig cfg;
  torch::nn::Conv2d stem{nullptr}, down1{nullptr}, down2{nullptr}, head{nullptr};
  torch::nn::ConvTranspose2d up1{nullptr}, up2{nullptr};
  std::vector<ResBlock> blocks;
  torch::nn::Conv2d head_ts0{nullptr}, head_ts1{nullptr}, head_ts2{nullptr};
  torch::nn::Linear cl_fc1{nullptr}, cl_fc2{nullptr};

  explicit GeneratorGImpl(const ModelConfig& config) : cfg(config) {
    cfg.validate();
    int64_t w = cfg.gen_width;
    stem = register_module("stem", detail::reflect_conv(3, w, 7));
    down1 = register_module(
        "down1", torch::nn::Conv2d(torch::nn::Conv2dOptions(w, 2 * w, 3).stride(2).padding(1)));
    down2 = register_module(
        "down2",
        torch::nn::Conv2d(torch::nn::Conv2dOptions(2 * w, 4 * w, 3).stride(2).padding(1)));
    for (int64_t i = 0; i < cfg.res_blocks; ++i) {
      blocks.push_back(register_module("block" + std::to_string(i), ResBlock(4 * w)));
    }
    up1 = register_module("up1",
                          torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(4 * w, 2 * w, 3)
                                                         .stride(2)
                                                         .padding(1)
                                                         .output_padding(1)));
    up2 = register_module("up2",
                          torch::nn::ConvTranspose2d(torch::nn::ConvTranspose2dOptions(2 * w, w, 3)
                                                         .stride(2)
                                                         .padding(1)
                                                         .output_padding(1)));
    head = register_module("head", detail::reflect_conv(w, 3, 7));
    head_ts0 = register_module("head_ts0", detail::reflect_conv(w, 1, 3));
    head_ts1 = register_module("head_ts1", detail::reflect_conv(2 * w, 1, 3));
    head_ts2 = register_module("head_ts2", detail::reflect_conv(4 * w, 1, 3));
    cl_fc1 = register_module("cl_fc1", torch::nn::Linear(4 * w, cfg.style_hidden));
    cl_fc2 = register_module("cl_fc2", torch::nn::Linear(cfg.style_hidden, cfg.d_cl));
  }

  GeneratorOutputs forward(const torch::Tensor& oc) {
    detail::check_image_input(oc, cfg, "forward_G");
    auto x = torch::relu(detail::instance_norm(stem->forward(oc)));
    x = torch::relu(detail::instance_norm(down1->forward(x)));
    x = torch::relu(detail::instance_norm(down2->forward(x)));
    for (auto& block : blocks) x = block->forward(x);

    auto deep = x;  // [B,4W,R/4,R/4]
    auto zts2 = torch::tanh(head_ts2->forward(deep));
    auto pooled = deep.mean({-2, -1});
    auto zcl_hat = torch::tanh(cl_fc2->forward(torch::relu(cl_fc1->forward(pooled))));

    auto u1 = torch::relu(detail::instance_norm(up1->forward(deep)));
    auto zts1 = torch::tanh(head_ts1->forward(u1));
    auto u2 = torch::relu(detail::instance_norm(up2->forward(u1)));
    auto zts0 = torch::tanh(head_ts0->forward(u2));
    auto image = torch::tanh(head->forward(u2));
    return {image, zcl_hat, {zts0, zts1, zts2}};
  }
};
TORCH_MODULE(GeneratorG);

/// PatchGAN discriminator: three stride-2 conv layers, one stride-1, and a
/// stride-1 logit head; no sigmoid. 64x64 input yields a 6x6 score map.
struct PatchDiscriminatorImpl : torch::nn::Module {
  ModelConfig cfg;
  torch::nn::Conv2d c1{nullptr}, c2{nullptr}, c3{nullptr}, c4{nullptr}, out{nullptr};

  explicit PatchDiscriminatorImpl(const ModelConfig& config) : cfg(config) {
    cfg.validate();
    int64_t d = cfg.disc_width;
    auto opts = [](int64_t in, int64_t o, int64_t stride) {
      return torch::nn::Conv2dOptions(in, o, 4).stride(stride).padding(1);
    };
    c1 = register_module("c1", torch::nn::Conv2d(opts(3, d, 2)));
    c2 = register_module("c2", torch::nn::Conv2d(opts(d, 2 * d, 2)));
    c3 = register_module("c3", torch::nn::Conv2d(opts(2 * d, 4 * d, 2)));
    c4 = register_module("c4", torch::nn::Conv2d(opts(4 * d, 8 * d, 1)));
    out = register_module("out", torch::nn::Conv2d(opts(8 * d, 1, 1)));
  }

  /// Accepts any square input >= 32; the score map size follows from the
  /// stride arithmetic alone.
  torch::Tensor forward(const torch::Tensor& img) {
    if (img.dim() != 4 || img.size(1) != 3 || img.size(2) != img.size(3) || img.size(2) < 32) {
      throw ValidationError("forward_D: input must be [B,3,R,R] with R >= 32");
    }
    auto x = torch::leaky_relu(c1->forward(img), 0.2);
    x = torch::leaky_relu(detail::instance_norm(c2->forward(x)), 0.2);
    x = torch::leaky_relu(detail::instance_norm(c3->forward(x)), 0.2);
    x = torch::leaky_relu(detail::instance_norm(c4->forward(x)), 0.2);
    return out->forward(x);  // [B,1,H',W'] raw logits
  }
};
TORCH_MODULE(PatchDiscriminator);

struct Models {
  ModelConfig config;
  GeneratorG g{nullptr};
  GeneratorF f{nullptr};
  PatchDiscriminator d_g{nullptr}, d_f{nullptr}, d_rec{nullptr};
};

/// Gaussian(0, 0.02) init for all conv/linear weights, zero biases.
inline void init_weights(torch::nn::Module& module) {
  torch::NoGradGuard guard;
  for (auto& m : module.modules(/*include_self=*/true)) {
    if (auto* c = m->as<torch::nn::Conv2d>()) {
      c->weight.normal_(0.0, 0.02);
      if (c->options.bias()) c->bias.zero_();
    } else if (auto* ct = m->as<torch::nn::ConvTranspose2d>()) {
      ct->weight.normal_(0.0, 0.02);
      if (ct->options.bias()) ct->bias.zero_();
    } else if (auto* l = m->as<torch::nn::Linear>()) {
      l->weight.normal_(0.0, 0.02);
      l->bias.zero_();
    }
  }
}

/// Builds and deterministically initializes the full model set. Construction
/// and init order are fixed, so a given (config, seed) always yields
/// bit-identical parameters on a platform.
inline Models make_models(const ModelConfig& config, uint64_t seed) {
  config.validate();
  torch::manual_seed(seed);
  Models m;
  m.config = config;
  m.g = GeneratorG(config);
  m.f = GeneratorF(config);
  m.d_g = PatchDiscriminator(config);
  m.d_f = PatchDiscriminator(config);
  m.d_rec = PatchDiscriminator(config);
  init_weights(*m.g);
  init_weights(*m.f);
  init_weights(*m.d_g);
  init_weights(*m.d_f);
  init_weights(*m.d_rec);
  m.f->style->init_parameters();
  return m;
}

inline int64_t count_parameters(const torch::nn::Module& m) {
  int64_t n = 0;
  for (const auto& p : m.parameters()) n += p.numel();
  return n;
}

}  // namespace lumen

#endif  // LUMEN_NETWORKS_HPP
