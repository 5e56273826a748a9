#pragma once

#include <vector>

#include "kbnet/tape.hpp"
#include "kbnet/tensor.hpp"

namespace kbnet::ops {

// Elementwise arithmetic with broadcasting: each dimension of the two
// operands must match or be 1; size-1 dimensions are repeated.
Tensor add(Tape& tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape& tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape& tape, const Tensor& a, const Tensor& b);
Tensor div(Tape& tape, const Tensor& a, const Tensor& b);

Tensor add_scalar(Tape& tape, const Tensor& a, double s);
Tensor mul_scalar(Tape& tape, const Tensor& a, double s);
Tensor neg(Tape& tape, const Tensor& a);

// Elementwise nonlinearities. abs uses the subgradient 0 at the kink;
// leaky_relu uses the negative-side slope at exactly 0.
Tensor abs(Tape& tape, const Tensor& a);
Tensor square(Tape& tape, const Tensor& a);
Tensor exp(Tape& tape, const Tensor& a);
Tensor sqrt(Tape& tape, const Tensor& a);
Tensor sigmoid(Tape& tape, const Tensor& a);
Tensor leaky_relu(Tape& tape, const Tensor& a, double slope);

// Reductions.
Tensor sum(Tape& tape, const Tensor& a);           // -> (1,1,1,1)
Tensor mean(Tape& tape, const Tensor& a);          // -> (1,1,1,1)
Tensor channel_mean(Tape& tape, const Tensor& a);  // (n,c,h,w) -> (n,1,h,w)
Tensor spatial_mean(Tape& tape, const Tensor& a);  // (n,c,h,w) -> (n,c,1,1)

// Channel manipulation.
Tensor concat_channels(Tape& tape, const std::vector<Tensor>& parts);
Tensor slice_channels(Tape& tape, const Tensor& a, int c0, int c1);  // [c0, c1)

// Spatial resampling.
Tensor upsample_nearest2(Tape& tape, const Tensor& a);
Tensor avg_pool2(Tape& tape, const Tensor& a);  // 2x2 stride-2 mean; dims must be even

// 3x3 uniform box filter with replicated borders (SSIM local statistics).
Tensor box_filter3(Tape& tape, const Tensor& a);

// Forward differences along x/y; output loses the last column/row.
Tensor grad_x(Tape& tape, const Tensor& a);
Tensor grad_y(Tape& tape, const Tensor& a);

// 2-D convolution: weight (c_out, c_in, k, k), optional bias (pass an
// undefined Tensor for none). Zero padding. Output spatial dims are
// floor((h + 2*padding - k)/stride) + 1.
Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding);

// Bilinear sampling of `image` at per-pixel (u, v) coordinates. coords has
// shape (n, 2, h_out, w_out): channel 0 = u (x axis), channel 1 = v.
// Coordinates outside [0, w-1] x [0, h-1] produce value 0 and mask 0; the
// mask (n, 1, h_out, w_out) carries no gradient. At integer boundary
// coordinates the interior-side subgradient is used.
struct SampleResult {
  Tensor values;
  Tensor mask;
};
SampleResult bilinear_sample(Tape& tape, const Tensor& image, const Tensor& coords);

// Stride-1 same-size pooling over odd k x k windows, per channel.
// masked_min_pool treats non-positive entries as +inf and maps windows with
// no valid entry to 0; masked_max_pool pools raw values with zero padding.
// The adjoint routes gradient to the winning entry; ties break toward the
// smallest linear index.
Tensor masked_min_pool(Tape& tape, const Tensor& a, int k);
Tensor masked_max_pool(Tape& tape, const Tensor& a, int k);

}  // namespace kbnet::ops
