#pragma once

#include <cstdint>
#include <vector>

#include "kbnet/ops.hpp"
#include "kbnet/random.hpp"
#include "kbnet/tape.hpp"
#include "kbnet/tensor.hpp"

namespace kbnet {

// H x W grid of depths in meters; 0 encodes "no measurement". The valid
// domain is the strictly positive support.
struct SparseDepthMap {
  Tensor grid;  // (1, 1, h, w)

  static SparseDepthMap from_tensor(const Tensor& t);  // validates >= 0, finite
  int height() const { return grid.shape().h; }
  int width() const { return grid.shape().w; }
  std::int64_t support_count() const;
};

// Multi-kernel pooling plan for the sparse-to-dense module. Defaults mirror
// the VOID preset; the KITTI preset is min {5,7,9,11,13} / max {15,17}.
struct S2DConfig {
  std::vector<int> min_kernels{15, 17};
  std::vector<int> max_kernels{23, 27, 29};
  int mid_channels = 8;
  int out_channels = 16;

  void validate() const;
  int branch_count() const {
    return static_cast<int>(min_kernels.size() + max_kernels.size());
  }
};

// Weights: three 1x1 convolutions over the pooled branches, then a 3x3
// convolution fusing their output with the raw input.
struct S2DParams {
  std::vector<Tensor> pw_w;  // 3 entries
  std::vector<Tensor> pw_b;
  Tensor fuse_w;  // (out_channels, mid_channels + 1, 3, 3)
  Tensor fuse_b;
};

S2DParams init_s2d_params(const S2DConfig& cfg, Rng& rng);

// Validity-masked stride-1 pooling; output size equals input size.
SparseDepthMap masked_min_pool(const SparseDepthMap& z, int k);
SparseDepthMap masked_max_pool(const SparseDepthMap& z, int k);

// Densification: pooled branches -> concat -> three 1x1 convolutions with
// leaky rectification -> 3x3 fusion with the input. Output
// (n, cfg.out_channels, h, w), differentiable wrt params and input.
Tensor s2d_forward(Tape& tape, const Tensor& z, const S2DParams& params, const S2DConfig& cfg);

}  // namespace kbnet
