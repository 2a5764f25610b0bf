#ifndef LUMEN_LOSSES_HPP
#define LUMEN_LOSSES_HPP

#include <torch/torch.h>

#include <cmath>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lumen/common.hpp"
#include "lumen/networks.hpp"

namespace lumen {

struct LossWeights {
  double lambda_adv = 1.0;
  double lambda_cyc = 10.0;
  double lambda_t = 20.0;
  double lambda_idt = 1.0;
  double alpha = 0.1;  // hinge margin on mean absolute difference

  void validate() const {
    if (lambda_adv < 0 || lambda_cyc < 0 || lambda_t < 0 || lambda_idt < 0) {
      throw ConfigError("loss weights must be non-negative");
    }
    if (alpha <= 0.0 || alpha > 2.0) {
      throw ConfigError("alpha must lie in (0, 2]");
    }
  }
};

/// All L1 norms in this library are MEAN absolute difference over elements,
/// which keeps values resolution-independent and the alpha margin meaningful
/// on [-1,1] images.
inline torch::Tensor mean_abs(const torch::Tensor& a, const torch::Tensor& b) {
  if (a.sizes() != b.sizes()) throw ValidationError("mean_abs: shape mismatch");
  return (a - b).abs().mean();
}

/// Hinge that rewards renders for differing: max(0, alpha - mean|i1 - i2|).
/// Value lies in [0, alpha]; symmetric in its image arguments.
inline torch::Tensor texture_loss(const torch::Tensor& i1, const torch::Tensor& i2, double alpha) {
  return torch::clamp_min(alpha - mean_abs(i1, i2), 0.0);
}

/// Mean binary cross-entropy between patch logits and a constant target.
inline torch::Tensor bce_logits_mean(const torch::Tensor& logits, double target) {
  return torch::binary_cross_entropy_with_logits(logits, torch::full_like(logits, target));
}

struct GanPair {
  torch::Tensor d_loss;  // discriminator minimizes (negated log-likelihood)
  torch::Tensor g_loss;  // non-saturating generator term
};

/// Log-form adversarial loss over patch score maps. The discriminator side is
/// the negated log-likelihood (so minimizing it maximizes the raw value); the
/// fake batch is detached there. The generator side is -E[log D(fake)] with
/// gradient flowing into the fake.
template <typename DFn>
GanPair gan_loss(DFn&& d, const torch::Tensor& real, const torch::Tensor& fake) {
  auto d_loss = bce_logits_mean(d(real), 1.0) + bce_logits_mean(d(fake.detach()), 0.0);
  auto g_loss = bce_logits_mean(d(fake), 1.0);
  return {d_loss, g_loss};
}

/// Reconstruction-adversarial loss: the "real" branch is the OC reconstruction
/// from G's predicted codes, the "fake" branch renders the same predicted VC
/// with freshly sampled codes. Generator gradient flows through both F and G
/// via the fake branch.
template <typename DFn, typename GFn, typename FFn>
GanPair gan_rec_loss(DFn&& d_rec, GFn&& g, FFn&& f, const torch::Tensor& x,
                     const torch::Tensor& zcl, const std::vector<torch::Tensor>& zts) {
  auto out = g(x);
  auto recon = f(out.image, out.zcl_hat, out.zts_hat);
  auto render = f(out.image, zcl, zts);
  auto d_loss =
      bce_logits_mean(d_rec(recon.detach()), 1.0) + bce_logits_mean(d_rec(render.detach()), 0.0);
  auto g_loss = bce_logits_mean(d_rec(render), 1.0);
  return {d_loss, g_loss};
}

/// OC cycle: mean-L1 between x and F applied to G's full output.
template <typename GFn, typename FFn>
torch::Tensor cycle_oc_loss(const torch::Tensor& x, GFn&& g, FFn&& f) {
  auto out = g(x);
  return mean_abs(x, f(out.image, out.zcl_hat, out.zts_hat));
}

struct VcCycleTerms {
  torch::Tensor img, zcl, zts;
};

/// VC cycle: renders x with the given codes through F, recovers image and
/// codes through G, and returns the three mean-L1 terms separately. The zts
/// term is averaged per level, then across levels.
template <typename GFn, typename FFn>
VcCycleTerms cycle_vc_loss(const torch::Tensor& x, const torch::Tensor& zcl,
                           const std::vector<torch::Tensor>& zts, GFn&& g, FFn&& f) {
  auto out = g(f(x, zcl, zts));
  if (out.zts_hat.size() != zts.size()) {
    throw ValidationError("cycle_vc_loss: zts level count mismatch");
  }
  auto zts_term = torch::zeros({}, zts[0].options());
  for (size_t k = 0; k < zts.size(); ++k) {
    zts_term = zts_term + mean_abs(zts[k], out.zts_hat[k]);
  }
  zts_term = zts_term / static_cast<double>(zts.size());
  return {mean_abs(x, out.image), mean_abs(zcl, out.zcl_hat), zts_term};
}

/// Texture diversity: hinge between two renders of the same VC that differ
/// only in their z_ts draw.
template <typename FFn>
torch::Tensor l_t(FFn&& f, const torch::Tensor& x, const torch::Tensor& zcl,
                  const std::vector<torch::Tensor>& zts1, const std::vector<torch::Tensor>& zts2,
                  double alpha) {
  return texture_loss(f(x, zcl, zts1), f(x, zcl, zts2), alpha);
}

/// Identity term on G's output domain: mean-L1 between x and G_im(x).
template <typename GFn>
torch::Tensor identity_loss(GFn&& g, const torch::Tensor& x) {
  return mean_abs(x, g(x).image);
}

/// Generator-side scalar terms entering the total objective.
struct ObjectiveTerms {
  torch::Tensor adv_g, adv_f, adv_rec;
  torch::Tensor cyc_oc, cyc_vc_img, cyc_vc_zcl, cyc_vc_zts;
  torch::Tensor text;
  torch::Tensor idt;
};

/// Weighted total: lambda_adv * (adv_G + adv_F + adv_rec)
///               + lambda_cyc * (cyc_oc + cyc_vc_img + cyc_vc_zcl + cyc_vc_zts)
///               + lambda_t * text + lambda_idt * idt.
/// Throws DivergenceError naming the first non-finite term.
inline torch::Tensor total_objective(const ObjectiveTerms& t, const LossWeights& w) {
  auto check = [](const torch::Tensor& v, const char* name) {
    if (!std::isfinite(v.item<double>())) {
      throw DivergenceError(std::string("non-finite loss term: ") + name);
    }
  };
  check(t.adv_g, "adv_G");
  check(t.adv_f, "adv_F");
  check(t.adv_rec, "adv_rec");
  check(t.cyc_oc, "cyc_oc");
  check(t.cyc_vc_img, "cyc_vc_img");
  check(t.cyc_vc_zcl, "cyc_vc_zcl");
  check(t.cyc_vc_zts, "cyc_vc_zts");
  check(t.text, "text");
  check(t.idt, "idt");
  auto l_adv = t.adv_g + t.adv_f + t.adv_rec;
  auto l_cyc = t.cyc_oc + t.cyc_vc_img + t.cyc_vc_zcl + t.cyc_vc_zts;
  return w.lambda_adv * l_adv + w.lambda_cyc * l_cyc + w.lambda_t * t.text + w.lambda_idt * t.idt;
}

/// Per-iteration scalar snapshot of every loss term.
struct LossReport {
  double adv_g = 0, adv_f = 0, adv_rec = 0;
  double cyc_oc = 0, cyc_vc_img = 0, cyc_vc_zcl = 0, cyc_vc_zts = 0;
  double text = 0, idt = 0;
  double d_g = 0, d_f = 0, d_rec = 0;  // discriminator-side values
  double total = 0;
};

inline nlohmann::ordered_json report_to_json(const LossReport& r, int64_t iteration) {
  return {{"iteration", iteration}, {"adv_G", r.adv_g},   {"adv_F", r.adv_f},
          {"adv_rec", r.adv_rec},   {"cyc_oc", r.cyc_oc}, {"cyc_vc_img", r.cyc_vc_img},
          {"cyc_vc_zcl", r.cyc_vc_zcl}, {"cyc_vc_zts", r.cyc_vc_zts}, {"text", r.text},
          {"idt", r.idt},           {"d_G", r.d_g},       {"d_F", r.d_f},
          {"d_rec", r.d_rec},       {"total", r.total}};
}

inline LossReport report_from_json(const nlohmann::json& j) {
  LossReport r;
  r.adv_g = j.at("adv_G").get<double>();
  r.adv_f = j.at("adv_F").get<double>();
  r.adv_rec = j.at("adv_rec").get<double>();
  r.cyc_oc = j.at("cyc_oc").get<double>();
  r.cyc_vc_img = j.at("cyc_vc_img").get<double>();
  r.cyc_vc_zcl = j.at("cyc_vc_zcl").get<double>();
  r.cyc_vc_zts = j.at("cyc_vc_zts").get<double>();
  r.text = j.at("text").get<double>();
  r.idt = j.at("idt").get<double>();
  r.d_g = j.at("d_G").get<double>();
  r.d_f = j.at("d_F").get<double>();
  r.d_rec = j.at("d_rec").get<double>();
  r.total = j.at("total").get<double>();
  return r;
}

}  // namespace lumen

#endif  // LUMEN_LOSSES_HPP
