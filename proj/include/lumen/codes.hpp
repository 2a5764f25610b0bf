#ifndef LUMEN_CODES_HPP
#define LUMEN_CODES_HPP

#include <torch/torch.h>

#include <cstdint>
#include <vector>

#include "lumen/common.hpp"

namespace lumen {

/// Fills a tensor with uniform [-1,1) draws from `rng` in row-major order.
/// The draw order is part of the reproducibility contract.
inline torch::Tensor uniform_tensor(Rng& rng, std::vector<int64_t> shape) {
  auto t = torch::empty(shape, torch::kFloat32);
  auto flat = t.view({-1});
  auto acc = flat.accessor<float, 1>();
  for (int64_t i = 0; i < flat.size(0); ++i) {
    acc[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  }
  return t;
}

/// Color-lighting code: [batch, d_cl], uniform in [-1,1).
inline torch::Tensor sample_zcl(Rng& rng, int64_t batch, int64_t d_cl) {
  if (batch < 1 || d_cl < 1) throw ConfigError("sample_zcl: batch and d_cl must be positive");
  return uniform_tensor(rng, {batch, d_cl});
}

/// Texture-specular noise: one [batch, 1, R/2^k, R/2^k] map per level
/// k = 0..levels-1, uniform in [-1,1), drawn coarsest-last in a fixed order.
inline std::vector<torch::Tensor> sample_zts(Rng& rng, int64_t batch, int64_t resolution,
                                             int64_t levels) {
  if (levels < 1) throw ConfigError("sample_zts: levels must be positive");
  if (resolution % (1LL << (levels - 1)) != 0) {
    throw ConfigError("sample_zts: resolution not divisible by 2^(levels-1)");
  }
  std::vector<torch::Tensor> maps;
  maps.reserve(levels);
  for (int64_t k = 0; k < levels; ++k) {
    int64_t r = resolution >> k;
    maps.push_back(uniform_tensor(rng, {batch, 1, r, r}));
  }
  return maps;
}

/// All-zero noise maps of the same shapes as sample_zts.
inline std::vector<torch::Tensor> zeros_zts(int64_t batch, int64_t resolution, int64_t levels) {
  std::vector<torch::Tensor> maps;
  maps.reserve(levels);
  for (int64_t k = 0; k < levels; ++k) {
    int64_t r = resolution >> k;
    maps.push_back(torch::zeros({batch, 1, r, r}, torch::kFloat32));
  }
  return maps;
}

}  // namespace lumen

#endif  // LUMEN_CODES_HPP
