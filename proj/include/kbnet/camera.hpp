#pragma once

#include <array>
#include <string>
#include <vector>

#include "kbnet/ops.hpp"
#include "kbnet/tape.hpp"
#include "kbnet/tensor.hpp"

namespace kbnet {

// Pinhole calibration with zero skew. Pixel coordinates index pixel centers
// at integers starting from 0; this convention is fixed here and used
// everywhere (warping, rendering, positional encodings).
struct Intrinsics {
  double fx = 1.0;
  double fy = 1.0;
  double cx = 0.0;
  double cy = 0.0;

  void validate() const;
  std::array<double, 9> matrix() const {
    return {fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0};
  }
};

// All four parameters divided by 2^level.
Intrinsics scale_intrinsics(const Intrinsics& k, int level);

// K^-1 * (u, v, 1): the viewing ray through a pixel.
std::array<double, 3> lift(const Intrinsics& k, double u, double v);

// lift(k, u, v) * depth.
std::array<double, 3> backproject(const Intrinsics& k, double u, double v, double depth);

// (fx X/Z + cx, fy Y/Z + cy); throws on Z <= 0 ("behind-camera").
std::array<double, 2> project(const Intrinsics& k, const std::array<double, 3>& p);

// Rigid transform: x -> R x + t. Row-major 3x3 rotation.
struct Pose {
  std::array<double, 9> rotation{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 3> translation{0, 0, 0};

  static Pose identity() { return Pose{}; }
  std::array<double, 3> apply(const std::array<double, 3>& p) const;
};

Pose compose(const Pose& a, const Pose& b);  // (a*b)(x) = a(b(x))
Pose inverse(const Pose& p);

// v = (wx, wy, wz, tx, ty, tz): rotation by Rodrigues' formula on the
// axis-angle part, translation taken directly.
Pose exp_se3(const std::array<double, 6>& v);

// Calibration file: one camera per line, four whitespace-separated floats
// "fx fy cx cy".
std::vector<Intrinsics> read_calibration(const std::string& path);

// Constant tensor (1, 3, h, w) of lifted rays; channel i holds component i
// of K^-1 (x, y, 1) per pixel.
Tensor lift_rays(const Intrinsics& k, int h, int w);

// Differentiable SE(3) exponential on a (n, 6, 1, 1) tensor; emits row-major
// rotations (n, 9, 1, 1) and translations (n, 3, 1, 1).
struct Se3Tensors {
  Tensor rotation;
  Tensor translation;
};
Se3Tensors se3_exp(Tape& tape, const Tensor& v6);

Se3Tensors pose_to_tensors(const Pose& p);  // constant tensors (1,9,1,1)/(1,3,1,1)
Pose pose_from_tensors(const Se3Tensors& t, int batch_index = 0);

// Per-pixel reprojection coordinates of backprojected depth under a rigid
// motion: coords(n,2,h,w) hold (u, v); mask(n,1,h,w) is 0 where the point
// lands behind the camera (coords are pushed out of bounds there so that
// sampling also masks them). Differentiable wrt depth, rotation, and
// translation; rotation/translation may have batch 1 to broadcast.
struct WarpCoords {
  Tensor coords;
  Tensor mask;
};
WarpCoords warp_coords(Tape& tape, const Tensor& depth, const Tensor& rotation,
                       const Tensor& translation, const Intrinsics& k);

// View reconstruction: samples `source` at the reprojection of `depth` under
// `pose`. Pixels reprojecting out of bounds or behind the camera carry value
// 0 and mask 0.
struct Reconstruction {
  Tensor image;
  Tensor mask;
};
Reconstruction reconstruct(Tape& tape, const Tensor& source, const Tensor& depth,
                           const Pose& pose, const Intrinsics& k);
Reconstruction reconstruct(Tape& tape, const Tensor& source, const Tensor& depth,
                           const Se3Tensors& pose, const Intrinsics& k);

}  // namespace kbnet
