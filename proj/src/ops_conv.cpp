#include <stdexcept>

#include "kbnet/ops.hpp"
#include "ops_common.hpp"

namespace kbnet::ops {

using detail::make_output;

Tensor conv2d(Tape& tape, const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int padding) {
  const Shape4 is = input.shape();
  const Shape4 ws = weight.shape();
  if (ws.h != ws.w) {
    throw std::invalid_argument("conv2d: kernel must be square, got weight " + ws.str());
  }
  if (is.c != ws.c) {
    throw std::invalid_argument("conv2d: input channels do not match weight: input " + is.str() +
                                " vs weight " + ws.str());
  }
  if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
  if (padding < 0) throw std::invalid_argument("conv2d: padding must be >= 0");
  const int k = ws.h;
  const int oh = (is.h + 2 * padding - k) / stride + 1;
  const int ow = (is.w + 2 * padding - k) / stride + 1;
  if (is.h + 2 * padding < k || is.w + 2 * padding < k) {
    throw std::invalid_argument("conv2d: kernel " + std::to_string(k) +
                                " larger than padded input " + is.str());
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.numel() != ws.n) {
    throw std::invalid_argument("conv2d: bias size " + std::to_string(bias.numel()) +
                                " does not match output channels of weight " + ws.str());
  }

  Tensor out = has_bias ? make_output(tape, {is.n, ws.n, oh, ow}, {&input, &weight, &bias})
                        : make_output(tape, {is.n, ws.n, oh, ow}, {&input, &weight});

  const double* px = input.data();
  const double* pw = weight.data();
  const double* pb = has_bias ? bias.data() : nullptr;
  double* po = out.data();

  for (int n = 0; n < is.n; ++n) {
    for (int co = 0; co < ws.n; ++co) {
      double* dst = po + (static_cast<std::int64_t>(n) * ws.n + co) * oh * ow;
      const double b = pb ? pb[co] : 0.0;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(oh) * ow; ++i) dst[i] = b;
      for (int ci = 0; ci < is.c; ++ci) {
        const double* src = px + (static_cast<std::int64_t>(n) * is.c + ci) * is.h * is.w;
        const double* wrow = pw + (static_cast<std::int64_t>(co) * is.c + ci) * k * k;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy0 = oy * stride - padding;
          for (int ky = 0; ky < k; ++ky) {
            const int iy = iy0 + ky;
            if (iy < 0 || iy >= is.h) continue;
            const double* srow = src + static_cast<std::int64_t>(iy) * is.w;
            const double* wk = wrow + ky * k;
            double* drow = dst + static_cast<std::int64_t>(oy) * ow;
            for (int ox = 0; ox < ow; ++ox) {
              const int ix0 = ox * stride - padding;
              double acc = 0.0;
              const int kx_lo = ix0 < 0 ? -ix0 : 0;
              const int kx_hi = ix0 + k > is.w ? is.w - ix0 : k;
              for (int kx = kx_lo; kx < kx_hi; ++kx) acc += srow[ix0 + kx] * wk[kx];
              drow[ox] += acc;
            }
          }
        }
      }
    }
  }

  if (out.requires_grad()) {
    Tensor xc = input, wc = weight, bc = bias, oc = out;
    tape.record([xc, wc, bc, oc, stride, padding, k, oh, ow]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      const Shape4 is = xc.shape();
      const Shape4 ws = wc.shape();
      const double* px = xc.data();
      const double* pw = wc.data();
      double* gx = xc.requires_grad() ? xc.grad().data() : nullptr;
      double* gw = wc.requires_grad() ? wc.grad().data() : nullptr;
      double* gb = (bc.defined() && bc.requires_grad()) ? bc.grad().data() : nullptr;

      for (int n = 0; n < is.n; ++n) {
        for (int co = 0; co < ws.n; ++co) {
          const double* grow0 = g + (static_cast<std::int64_t>(n) * ws.n + co) * oh * ow;
          if (gb) {
            double acc = 0.0;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(oh) * ow; ++i)
              acc += grow0[i];
            gb[co] += acc;
          }
          for (int ci = 0; ci < is.c; ++ci) {
            const std::int64_t xoff = (static_cast<std::int64_t>(n) * is.c + ci) * is.h * is.w;
            const std::int64_t woff = (static_cast<std::int64_t>(co) * is.c + ci) * k * k;
            for (int oy = 0; oy < oh; ++oy) {
              const int iy0 = oy * stride - padding;
              const double* grow = grow0 + static_cast<std::int64_t>(oy) * ow;
              for (int ky = 0; ky < k; ++ky) {
                const int iy = iy0 + ky;
                if (iy < 0 || iy >= is.h) continue;
                for (int ox = 0; ox < ow; ++ox) {
                  const int ix0 = ox * stride - padding;
                  const double gv = grow[ox];
                  if (gv == 0.0) continue;
                  const int kx_lo = ix0 < 0 ? -ix0 : 0;
                  const int kx_hi = ix0 + k > is.w ? is.w - ix0 : k;
                  const std::int64_t srow = xoff + static_cast<std::int64_t>(iy) * is.w + ix0;
                  for (int kx = kx_lo; kx < kx_hi; ++kx) {
                    if (gw) gw[woff + ky * k + kx] += gv * px[srow + kx];
                    if (gx) gx[srow + kx] += gv * pw[woff + ky * k + kx];
                  }
                }
              }
            }
          }
        }
      }
    });
  }
  return out;
}

}  // namespace kbnet::ops
