#include "kbnet/kbnet.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace kbnet {

namespace {

constexpr double kLeakySlope = 0.1;
constexpr int kLevels = 5;
// Final pose layer is scaled down so random initializations start near the
// identity transform.
constexpr double kPoseScale = 0.01;

Tensor init_conv_weight(Shape4 s, Rng& rng) {
  Tensor w = Tensor::zeros(s);
  const double bound = std::sqrt(1.0 / (static_cast<double>(s.c) * s.h * s.w));
  for (double& v : w.values()) v = rng.uniform(-bound, bound);
  w.set_requires_grad(true);
  return w;
}

Tensor init_bias(int c, double value = 0.0) {
  Tensor b = Tensor::full({1, c, 1, 1}, value);
  b.set_requires_grad(true);
  return b;
}

Tensor conv_block(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b, int stride,
                  int padding) {
  return ops::leaky_relu(tape, ops::conv2d(tape, x, w, b, stride, padding), kLeakySlope);
}

}  // namespace

void NetworkConfig::validate() const {
  s2d.validate();
  if (depth_channels.size() != kLevels || fused_channels.size() != kLevels ||
      decoder_channels.size() != kLevels) {
    throw std::invalid_argument("network config: channel plans must list exactly 5 levels");
  }
  for (int c : depth_channels)
    if (c < 1) throw std::invalid_argument("network config: depth_channels must be positive");
  for (int c : fused_channels)
    if (c < 1) throw std::invalid_argument("network config: fused_channels must be positive");
  for (int c : decoder_channels)
    if (c < 1) throw std::invalid_argument("network config: decoder_channels must be positive");
  if (depth_out < 1 || fused_out < 1) {
    throw std::invalid_argument("network config: bottleneck channels must be positive");
  }
  if (pose_channels.size() != kLevels) {
    throw std::invalid_argument("network config: pose_channels must list exactly 5 stages");
  }
  if (!(d_min > 0.0) || !(d_max > d_min)) {
    throw std::invalid_argument("network config: require 0 < d_min < d_max");
  }
  if (d_init != 0.0 && !(d_init > d_min && d_init < d_max)) {
    throw std::invalid_argument("network config: d_init must lie strictly inside [d_min, d_max]");
  }
}

NetworkConfig NetworkConfig::paper_default() {
  NetworkConfig cfg;
  cfg.s2d.min_kernels = {5, 7, 9, 11, 13};
  cfg.s2d.max_kernels = {15, 17};
  cfg.d_min = 0.1;
  cfg.d_max = 100.0;
  return cfg;
}

NetworkConfig NetworkConfig::compact(double d_min, double d_max) {
  NetworkConfig cfg;
  cfg.depth_channels = {8, 12, 16, 24, 32};
  cfg.fused_channels = {16, 24, 32, 48, 64};
  cfg.depth_out = 32;
  cfg.fused_out = 64;
  cfg.decoder_channels = {48, 32, 24, 16, 16};
  cfg.pose_channels = {8, 12, 16, 24, 32};
  cfg.d_min = d_min;
  cfg.d_max = d_max;
  return cfg;
}

std::vector<std::pair<std::string, Tensor>> ModelParams::named_parameters() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (int i = 0; i < 3; ++i) {
    out.emplace_back("s2d.pw" + std::to_string(i) + ".w", s2d.pw_w[i]);
    out.emplace_back("s2d.pw" + std::to_string(i) + ".b", s2d.pw_b[i]);
  }
  out.emplace_back("s2d.fuse.w", s2d.fuse_w);
  out.emplace_back("s2d.fuse.b", s2d.fuse_b);
  out.emplace_back("stem.image.w", stem_image_w);
  out.emplace_back("stem.image.b", stem_image_b);
  out.emplace_back("stem.depth.w", stem_depth_w);
  out.emplace_back("stem.depth.b", stem_depth_b);
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const std::string p = "kb" + std::to_string(i) + ".";
    out.emplace_back(p + "q", layers[i].q);
    out.emplace_back(p + "depth.w", layers[i].depth_w);
    out.emplace_back(p + "depth.b", layers[i].depth_b);
    out.emplace_back(p + "image.w", layers[i].image_w);
    out.emplace_back(p + "image.b", layers[i].image_b);
    out.emplace_back(p + "fuse.w", layers[i].fuse_w);
    out.emplace_back(p + "fuse.b", layers[i].fuse_b);
  }
  for (std::size_t i = 0; i < dec_w.size(); ++i) {
    out.emplace_back("dec" + std::to_string(i) + ".w", dec_w[i]);
    out.emplace_back("dec" + std::to_string(i) + ".b", dec_b[i]);
  }
  out.emplace_back("head.w", head_w);
  out.emplace_back("head.b", head_b);
  if (pose.has_value()) {
    for (std::size_t i = 0; i < pose->conv_w.size(); ++i) {
      out.emplace_back("pose.conv" + std::to_string(i) + ".w", pose->conv_w[i]);
      out.emplace_back("pose.conv" + std::to_string(i) + ".b", pose->conv_b[i]);
    }
    out.emplace_back("pose.head.w", pose->head_w);
    out.emplace_back("pose.head.b", pose->head_b);
  }
  return out;
}

std::vector<Tensor> ModelParams::parameters() const {
  std::vector<Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::int64_t ModelParams::parameter_count(bool include_pose) const {
  std::int64_t n = 0;
  for (auto& [name, t] : named_parameters()) {
    if (!include_pose && name.rfind("pose.", 0) == 0) continue;
    n += t.numel();
  }
  return n;
}

void ModelParams::zero_grad() {
  for (Tensor& t : parameters()) t.zero_grad();
}

ModelParams init_model_params(const NetworkConfig& cfg, std::uint64_t seed, bool with_pose) {
  cfg.validate();
  Rng rng(Rng::mix(seed, 0x6b626e65));
  ModelParams p;
  p.s2d = init_s2d_params(cfg.s2d, rng);
  p.stem_image_w = init_conv_weight({cfg.fused_channels[0], 3, 3, 3}, rng);
  p.stem_image_b = init_bias(cfg.fused_channels[0]);
  p.stem_depth_w = init_conv_weight({cfg.depth_channels[0], cfg.s2d.out_channels, 3, 3}, rng);
  p.stem_depth_b = init_bias(cfg.depth_channels[0]);

  for (int l = 0; l < kLevels; ++l) {
    const int m = cfg.depth_channels[l];
    const int n = cfg.fused_channels[l];
    const int m_next = (l + 1 < kLevels) ? cfg.depth_channels[l + 1] : cfg.depth_out;
    const int n_next = (l + 1 < kLevels) ? cfg.fused_channels[l + 1] : cfg.fused_out;
    const int n_prev = (l == 0) ? 0 : cfg.fused_channels[l - 1];
    KBLayerParams kb;
    kb.q = init_conv_weight({1, m, 1, 1}, rng);
    kb.depth_w = init_conv_weight({m_next, m, 3, 3}, rng);
    kb.depth_b = init_bias(m_next);
    kb.image_w = init_conv_weight({n_next, n, 3, 3}, rng);
    kb.image_b = init_bias(n_next);
    kb.fuse_w = init_conv_weight({n, n + n_prev + 3, 1, 1}, rng);
    kb.fuse_b = init_bias(n);
    p.layers.push_back(kb);
  }

  int in_c = cfg.depth_out + cfg.fused_out;  // bottleneck = concat of branch outputs
  for (int i = 0; i < kLevels; ++i) {
    const int skip_c = cfg.fused_channels[kLevels - 1 - i];
    const int out_c = cfg.decoder_channels[i];
    p.dec_w.push_back(init_conv_weight({out_c, in_c + skip_c, 3, 3}, rng));
    p.dec_b.push_back(init_bias(out_c));
    in_c = out_c;
  }
  p.head_w = init_conv_weight({1, in_c, 3, 3}, rng);
  const double d_init = cfg.d_init > 0.0 ? cfg.d_init : 0.5 * (cfg.d_min + cfg.d_max);
  const double frac = (d_init - cfg.d_min) / (cfg.d_max - cfg.d_min);
  p.head_b = init_bias(1, std::log(frac / (1.0 - frac)));

  if (with_pose) {
    PoseNetParams pn;
    int c = 6;
    for (int i = 0; i < kLevels; ++i) {
      pn.conv_w.push_back(init_conv_weight({cfg.pose_channels[i], c, 3, 3}, rng));
      pn.conv_b.push_back(init_bias(cfg.pose_channels[i]));
      c = cfg.pose_channels[i];
    }
    pn.head_w = init_conv_weight({6, c, 1, 1}, rng);
    pn.head_b = init_bias(6);
    p.pose = pn;
  }
  return p;
}

KBLayerOut kb_layer_forward(Tape& tape, const Tensor& phi, const Tensor& psi, const Tensor& psi3d,
                            const Intrinsics& k_level, const KBLayerParams& params) {
  const Shape4 ps = phi.shape();
  const Shape4 is = psi.shape();
  if (ps.h != is.h || ps.w != is.w || ps.n != is.n) {
    throw std::invalid_argument("kb_layer: depth features " + ps.str() + " and image features " +
                                is.str() + " must be aligned");
  }
  if (params.q.shape().c != ps.c) {
    throw std::invalid_argument("kb_layer: compression vector expects " +
                                std::to_string(params.q.shape().c) + " channels, got " + ps.str());
  }

  // d(x) = q^T phi(x), then x3d = K^-1 (u, v, 1) d(x) per pixel.
  Tensor d = ops::conv2d(tape, phi, params.q, Tensor(), 1, 0);
  Tensor rays = lift_rays(k_level, ps.h, ps.w);
  Tensor x3d = ops::mul(tape, d, rays);

  std::vector<Tensor> cat{psi};
  if (psi3d.defined()) cat.push_back(psi3d);
  cat.push_back(x3d);
  Tensor fused_in = ops::concat_channels(tape, cat);
  Tensor fused = conv_block(tape, fused_in, params.fuse_w, params.fuse_b, 1, 0);

  KBLayerOut out;
  out.fused = fused;
  out.phi_next = conv_block(tape, phi, params.depth_w, params.depth_b, 2, 1);
  out.psi_next = conv_block(tape, psi, params.image_w, params.image_b, 2, 1);
  return out;
}

EncoderOut encoder_forward(Tape& tape, const Tensor& image, const Tensor& dense_z,
                           const Intrinsics& k, const ModelParams& params,
                           const NetworkConfig& cfg) {
  const Shape4 is = image.shape();
  const Shape4 zs = dense_z.shape();
  if (is.h != zs.h || is.w != zs.w || is.n != zs.n) {
    throw std::invalid_argument("encoder: image " + is.str() + " and depth features " + zs.str() +
                                " must be aligned");
  }
  if (is.h % 32 != 0 || is.w % 32 != 0) {
    std::ostringstream os;
    os << "encoder: spatial dims must be a multiple of 32, got " << is.h << "x" << is.w;
    throw std::invalid_argument(os.str());
  }

  Tensor psi = conv_block(tape, image, params.stem_image_w, params.stem_image_b, 1, 1);
  Tensor phi = conv_block(tape, dense_z, params.stem_depth_w, params.stem_depth_b, 1, 1);

  EncoderOut out;
  Tensor psi3d;  // undefined for the first layer
  for (int l = 0; l < kLevels; ++l) {
    const Intrinsics k_level = scale_intrinsics(k, l);
    KBLayerOut lo = kb_layer_forward(tape, phi, psi, psi3d, k_level, params.layers[l]);
    out.skips.push_back(lo.fused);
    phi = lo.phi_next;
    psi = lo.psi_next;
    if (l + 1 < kLevels) psi3d = ops::avg_pool2(tape, lo.fused);
  }
  out.bottleneck = ops::concat_channels(tape, {phi, psi});
  return out;
}

Tensor decoder_forward(Tape& tape, const EncoderOut& enc, const ModelParams& params,
                       const NetworkConfig& cfg) {
  if (enc.skips.size() != kLevels) {
    throw std::invalid_argument("decoder: expected 5 skip maps, got " +
                                std::to_string(enc.skips.size()));
  }
  Tensor x = enc.bottleneck;
  for (int i = 0; i < kLevels; ++i) {
    Tensor up = ops::upsample_nearest2(tape, x);
    Tensor cat = ops::concat_channels(tape, {up, enc.skips[kLevels - 1 - i]});
    x = conv_block(tape, cat, params.dec_w[i], params.dec_b[i], 1, 1);
  }
  Tensor logits = ops::conv2d(tape, x, params.head_w, params.head_b, 1, 1);
  Tensor unit = ops::sigmoid(tape, logits);
  return ops::add_scalar(tape, ops::mul_scalar(tape, unit, cfg.d_max - cfg.d_min), cfg.d_min);
}

Tensor kbnet_forward(Tape& tape, const Tensor& image, const SparseDepthMap& z,
                     const Intrinsics& k, const ModelParams& params, const NetworkConfig& cfg) {
  Tensor dense = s2d_forward(tape, z.grid, params.s2d, cfg.s2d);
  EncoderOut enc = encoder_forward(tape, image, dense, k, params, cfg);
  return decoder_forward(tape, enc, params, cfg);
}

Se3Tensors pose_net_forward(Tape& tape, const Tensor& img_t, const Tensor& img_tau,
                            const PoseNetParams& params) {
  if (!(img_t.shape() == img_tau.shape())) {
    throw std::invalid_argument("pose_net: image shapes differ: " + img_t.shape().str() + " vs " +
                                img_tau.shape().str());
  }
  Tensor x = ops::concat_channels(tape, {img_t, img_tau});
  for (std::size_t i = 0; i < params.conv_w.size(); ++i) {
    x = conv_block(tape, x, params.conv_w[i], params.conv_b[i], 2, 1);
  }
  Tensor pooled = ops::spatial_mean(tape, x);
  Tensor v6 = ops::conv2d(tape, pooled, params.head_w, params.head_b, 1, 0);
  return se3_exp(tape, ops::mul_scalar(tape, v6, kPoseScale));
}

}  // namespace kbnet
