#include "kbnet/s2d.hpp"

#include <cmath>
#include <stdexcept>

namespace kbnet {

namespace {
constexpr double kLeakySlope = 0.1;

Tensor init_conv_weight(Shape4 s, Rng& rng) {
  Tensor w = Tensor::zeros(s);
  const double bound = std::sqrt(1.0 / (static_cast<double>(s.c) * s.h * s.w));
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  w.set_requires_grad(true);
  return w;
}

Tensor init_bias(int c) {
  Tensor b = Tensor::zeros({1, c, 1, 1});
  b.set_requires_grad(true);
  return b;
}
}  // namespace

SparseDepthMap SparseDepthMap::from_tensor(const Tensor& t) {
  const Shape4 s = t.shape();
  if (s.n != 1 || s.c != 1) {
    throw std::invalid_argument("sparse depth map must be (1,1,h,w), got " + s.str());
  }
  for (double v : t.values()) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("sparse depth map entries must be finite and >= 0");
    }
  }
  return SparseDepthMap{t};
}

std::int64_t SparseDepthMap::support_count() const {
  std::int64_t n = 0;
  for (double v : grid.values()) {
    if (v > 0.0) ++n;
  }
  return n;
}

void S2DConfig::validate() const {
  if (min_kernels.empty() || max_kernels.empty()) {
    throw std::invalid_argument("s2d config: min_kernels and max_kernels must be non-empty");
  }
  for (int k : min_kernels) {
    if (k < 3 || k % 2 == 0)
      throw std::invalid_argument("s2d config: min kernel sizes must be odd and >= 3, got " +
                                  std::to_string(k));
  }
  for (int k : max_kernels) {
    if (k < 3 || k % 2 == 0)
      throw std::invalid_argument("s2d config: max kernel sizes must be odd and >= 3, got " +
                                  std::to_string(k));
  }
  if (mid_channels < 1 || out_channels < 1) {
    throw std::invalid_argument("s2d config: channel counts must be >= 1");
  }
}

S2DParams init_s2d_params(const S2DConfig& cfg, Rng& rng) {
  cfg.validate();
  S2DParams p;
  int cin = cfg.branch_count();
  for (int i = 0; i < 3; ++i) {
    p.pw_w.push_back(init_conv_weight({cfg.mid_channels, cin, 1, 1}, rng));
    p.pw_b.push_back(init_bias(cfg.mid_channels));
    cin = cfg.mid_channels;
  }
  p.fuse_w = init_conv_weight({cfg.out_channels, cfg.mid_channels + 1, 3, 3}, rng);
  p.fuse_b = init_bias(cfg.out_channels);
  return p;
}

SparseDepthMap masked_min_pool(const SparseDepthMap& z, int k) {
  Tape tape;
  tape.set_enabled(false);
  return SparseDepthMap{ops::masked_min_pool(tape, z.grid, k)};
}

SparseDepthMap masked_max_pool(const SparseDepthMap& z, int k) {
  Tape tape;
  tape.set_enabled(false);
  return SparseDepthMap{ops::masked_max_pool(tape, z.grid, k)};
}

Tensor s2d_forward(Tape& tape, const Tensor& z, const S2DParams& params, const S2DConfig& cfg) {
  cfg.validate();
  if (z.shape().c != 1) {
    throw std::invalid_argument("s2d_forward expects a single-channel depth map, got " +
                                z.shape().str());
  }
  if (params.pw_w.size() != 3 || params.pw_b.size() != 3 ||
      params.pw_w[0].shape().c != cfg.branch_count()) {
    throw std::invalid_argument("s2d_forward: params do not match config");
  }

  std::vector<Tensor> branches;
  for (int k : cfg.min_kernels) branches.push_back(ops::masked_min_pool(tape, z, k));
  for (int k : cfg.max_kernels) branches.push_back(ops::masked_max_pool(tape, z, k));
  Tensor x = ops::concat_channels(tape, branches);
  for (int i = 0; i < 3; ++i) {
    x = ops::conv2d(tape, x, params.pw_w[i], params.pw_b[i], 1, 0);
    x = ops::leaky_relu(tape, x, kLeakySlope);
  }
  Tensor fused_in = ops::concat_channels(tape, {x, z});
  return ops::conv2d(tape, fused_in, params.fuse_w, params.fuse_b, 1, 1);
}

}  // namespace kbnet
