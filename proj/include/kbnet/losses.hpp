#pragma once

#include <vector>

#include "kbnet/camera.hpp"
#include "kbnet/s2d.hpp"
#include "kbnet/tape.hpp"
#include "kbnet/tensor.hpp"

namespace kbnet {

// Loss term weights. Defaults follow the outdoor preset; the indoor preset
// overrides w_sz = 2 and w_sm = 2.
struct LossWeights {
  double w_ph = 1.0;
  double w_co = 0.15;
  double w_st = 0.95;
  double w_sz = 0.6;
  double w_sm = 0.04;

  void validate() const;
};

// Structural similarity with 3x3 uniform windows and stabilizers C1 = 0.01^2,
// C2 = 0.03^2 on [0, 1] inputs. Returns a per-pixel map with the input's
// channel count. Border statistics use replicated edges, so constant inputs
// give the constant-image closed form everywhere.
Tensor ssim(Tape& tape, const Tensor& a, const Tensor& b);

// Average reprojection error over the valid pixels of each reconstruction:
// per frame, mean over valid pixels of
//   w_co |I_hat - I_t| + w_st (1 - SSIM(I_hat, I_t)),
// channel means taken per pixel, then the frames are averaged. Values at
// masked pixels never influence the result. Throws if a reconstruction has
// no valid pixels.
Tensor photometric_loss(Tape& tape, const Tensor& img_t,
                        const std::vector<Reconstruction>& recons, const LossWeights& w);

// Mean absolute difference against the sparse measurements over their
// support; 0 (with a warning to stderr) when the support is empty.
Tensor sparse_consistency_loss(Tape& tape, const Tensor& dhat, const SparseDepthMap& z);

// Edge-aware total variation: forward differences on the prediction weighted
// by exp(-|gradient of img_t|) per direction, normalized by the pixel count.
// Multi-channel image gradients enter as the mean absolute channel gradient.
Tensor smoothness_loss(Tape& tape, const Tensor& dhat, const Tensor& img_t);

// w_ph * ph + w_sz * sz + w_sm * sm; rejects non-finite terms by name.
Tensor total_loss(Tape& tape, const Tensor& ph, const Tensor& sz, const Tensor& sm,
                  const LossWeights& w);

}  // namespace kbnet
