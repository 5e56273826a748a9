#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "kbnet/camera.hpp"
#include "kbnet/s2d.hpp"

namespace kbnet {

// Channel plan of the depth-completion network. Five encoder levels; spatial
// resolution halves per level, the bottleneck sits at H/32 x W/32.
struct NetworkConfig {
  S2DConfig s2d;
  std::vector<int> depth_channels{16, 27, 45, 76, 128};   // M per level
  std::vector<int> fused_channels{48, 81, 136, 229, 386};  // N per level
  int depth_out = 128;  // depth branch output of the last level
  int fused_out = 386;  // image branch output of the last level
  std::vector<int> decoder_channels{320, 160, 96, 64, 32};
  std::vector<int> pose_channels{16, 24, 48, 96, 192};
  double d_min = 0.1;
  double d_max = 100.0;
  // Initial depth the output head is biased toward; 0 means the midpoint of
  // [d_min, d_max].
  double d_init = 0.0;

  void validate() const;
  static NetworkConfig paper_default();  // full-size plan (~6.9M parameters)
  static NetworkConfig compact(double d_min, double d_max);  // desk-scale plan
};

// One calibrated-backprojection layer: a trainable compression vector q
// collapsing the depth features to a scalar per pixel, separate 3x3 branch
// convolutions, and a 1x1 fusion of [image features, previous fused
// features, 3-D positional encoding].
struct KBLayerParams {
  Tensor q;        // (1, M, 1, 1)
  Tensor depth_w;  // (M_next, M, 3, 3), stride 2
  Tensor depth_b;
  Tensor image_w;  // (N_next, N, 3, 3), stride 2
  Tensor image_b;
  Tensor fuse_w;  // (N, N + N_prev + 3, 1, 1)
  Tensor fuse_b;
};

struct PoseNetParams {
  std::vector<Tensor> conv_w;
  std::vector<Tensor> conv_b;
  Tensor head_w;  // (6, C_last, 1, 1)
  Tensor head_b;
};

// All trainable weights, with a stable serialization order given by
// named_parameters().
struct ModelParams {
  S2DParams s2d;
  Tensor stem_image_w, stem_image_b;
  Tensor stem_depth_w, stem_depth_b;
  std::vector<KBLayerParams> layers;
  std::vector<Tensor> dec_w, dec_b;
  Tensor head_w, head_b;
  std::optional<PoseNetParams> pose;

  std::vector<std::pair<std::string, Tensor>> named_parameters() const;
  std::vector<Tensor> parameters() const;
  std::int64_t parameter_count(bool include_pose = false) const;
  void zero_grad();
};

ModelParams init_model_params(const NetworkConfig& cfg, std::uint64_t seed, bool with_pose);

struct KBLayerOut {
  Tensor phi_next;  // depth features at half resolution
  Tensor psi_next;  // image features at half resolution
  Tensor fused;     // RGB-3D encoding at this level's resolution (skip)
};

// K_level must already be scaled to this level's resolution. psi3d may be
// undefined for the first layer.
KBLayerOut kb_layer_forward(Tape& tape, const Tensor& phi, const Tensor& psi, const Tensor& psi3d,
                            const Intrinsics& k_level, const KBLayerParams& params);

struct EncoderOut {
  std::vector<Tensor> skips;  // 5 fused maps at 1/1 .. 1/16 resolution
  Tensor bottleneck;          // at 1/32
};

EncoderOut encoder_forward(Tape& tape, const Tensor& image, const Tensor& dense_z,
                           const Intrinsics& k, const ModelParams& params,
                           const NetworkConfig& cfg);

// Five nearest-neighbor x2 upsampling stages, each fusing the matching skip
// with a 3x3 convolution; scaled sigmoid maps the head into [d_min, d_max].
Tensor decoder_forward(Tape& tape, const EncoderOut& enc, const ModelParams& params,
                       const NetworkConfig& cfg);

// d = f_theta(f_omega(z), I, K). Inference needs no pose.
Tensor kbnet_forward(Tape& tape, const Tensor& image, const SparseDepthMap& z,
                     const Intrinsics& k, const ModelParams& params, const NetworkConfig& cfg);

// Pose regressor: stride-2 convolutions, global average pooling, linear
// 6-vector through the SE(3) exponential.
Se3Tensors pose_net_forward(Tape& tape, const Tensor& img_t, const Tensor& img_tau,
                            const PoseNetParams& params);

}  // namespace kbnet
