#include <cmath>
#include <stdexcept>

#include "kbnet/ops.hpp"
#include "ops_common.hpp"

namespace kbnet::ops {

using detail::make_output;

SampleResult bilinear_sample(Tape& tape, const Tensor& image, const Tensor& coords) {
  const Shape4 is = image.shape();
  const Shape4 cs = coords.shape();
  if (cs.c != 2) {
    throw std::invalid_argument("bilinear_sample: coords must have 2 channels (u, v), got " +
                                cs.str());
  }
  if (cs.n != is.n) {
    throw std::invalid_argument("bilinear_sample: batch mismatch, image " + is.str() +
                                " vs coords " + cs.str());
  }
  if (is.h < 2 || is.w < 2) {
    throw std::invalid_argument("bilinear_sample: image must be at least 2x2, got " + is.str());
  }

  Tensor out = make_output(tape, {is.n, is.c, cs.h, cs.w}, {&image, &coords});
  Tensor mask = Tensor::zeros({is.n, 1, cs.h, cs.w});

  const double* pi = image.data();
  const double* pc = coords.data();
  double* po = out.data();
  double* pm = mask.data();
  const std::int64_t oplane = static_cast<std::int64_t>(cs.h) * cs.w;
  const std::int64_t iplane = static_cast<std::int64_t>(is.h) * is.w;

  // A 1e-9 slack keeps the validity mask stable when reprojection reproduces
  // a lattice coordinate up to rounding (identity warps, pure translations).
  constexpr double kBoundTol = 1e-9;
  for (int n = 0; n < is.n; ++n) {
    const double* cu = pc + static_cast<std::int64_t>(n) * 2 * oplane;
    const double* cv = cu + oplane;
    for (std::int64_t i = 0; i < oplane; ++i) {
      double u = cu[i];
      double v = cv[i];
      if (!(u >= -kBoundTol && u <= is.w - 1 + kBoundTol && v >= -kBoundTol &&
            v <= is.h - 1 + kBoundTol)) {
        continue;
      }
      u = u < 0.0 ? 0.0 : (u > is.w - 1 ? is.w - 1 : u);
      v = v < 0.0 ? 0.0 : (v > is.h - 1 ? is.h - 1 : v);
      pm[n * oplane + i] = 1.0;
      int x0 = static_cast<int>(std::floor(u));
      int y0 = static_cast<int>(std::floor(v));
      if (x0 > is.w - 2) x0 = is.w - 2;  // interior-side weights at the far edge
      if (y0 > is.h - 2) y0 = is.h - 2;
      const double du = u - x0;
      const double dv = v - y0;
      const double w00 = (1.0 - du) * (1.0 - dv);
      const double w01 = du * (1.0 - dv);
      const double w10 = (1.0 - du) * dv;
      const double w11 = du * dv;
      for (int c = 0; c < is.c; ++c) {
        const double* src = pi + (static_cast<std::int64_t>(n) * is.c + c) * iplane;
        const double* r0 = src + static_cast<std::int64_t>(y0) * is.w + x0;
        po[(static_cast<std::int64_t>(n) * is.c + c) * oplane + i] =
            w00 * r0[0] + w01 * r0[1] + w10 * r0[is.w] + w11 * r0[is.w + 1];
      }
    }
  }

  if (out.requires_grad()) {
    Tensor ic = image, cc = coords, oc = out, mc = mask;
    tape.record([ic, cc, oc, mc]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      const Shape4 is = ic.shape();
      const Shape4 cs = cc.shape();
      const std::int64_t oplane = static_cast<std::int64_t>(cs.h) * cs.w;
      const std::int64_t iplane = static_cast<std::int64_t>(is.h) * is.w;
      const double* pi = ic.data();
      const double* pc = cc.data();
      const double* pm = mc.data();
      double* gi = ic.requires_grad() ? ic.grad().data() : nullptr;
      double* gc = cc.requires_grad() ? cc.grad().data() : nullptr;

      for (int n = 0; n < is.n; ++n) {
        const double* cu = pc + static_cast<std::int64_t>(n) * 2 * oplane;
        const double* cv = cu + oplane;
        for (std::int64_t i = 0; i < oplane; ++i) {
          if (pm[n * oplane + i] == 0.0) continue;
          double u = cu[i];
          double v = cv[i];
          u = u < 0.0 ? 0.0 : (u > is.w - 1 ? is.w - 1 : u);
          v = v < 0.0 ? 0.0 : (v > is.h - 1 ? is.h - 1 : v);
          int x0 = static_cast<int>(std::floor(u));
          int y0 = static_cast<int>(std::floor(v));
          if (x0 > is.w - 2) x0 = is.w - 2;
          if (y0 > is.h - 2) y0 = is.h - 2;
          const double du = u - x0;
          const double dv = v - y0;
          double gu = 0.0, gv = 0.0;
          for (int c = 0; c < is.c; ++c) {
            const double gz = g[(static_cast<std::int64_t>(n) * is.c + c) * oplane + i];
            if (gz == 0.0) continue;
            const std::int64_t base =
                (static_cast<std::int64_t>(n) * is.c + c) * iplane + y0 * is.w + x0;
            const double i00 = pi[base];
            const double i01 = pi[base + 1];
            const double i10 = pi[base + is.w];
            const double i11 = pi[base + is.w + 1];
            if (gi) {
              gi[base] += gz * (1.0 - du) * (1.0 - dv);
              gi[base + 1] += gz * du * (1.0 - dv);
              gi[base + is.w] += gz * (1.0 - du) * dv;
              gi[base + is.w + 1] += gz * du * dv;
            }
            gu += gz * ((1.0 - dv) * (i01 - i00) + dv * (i11 - i10));
            gv += gz * ((1.0 - du) * (i10 - i00) + du * (i11 - i01));
          }
          if (gc) {
            gc[n * 2 * oplane + i] += gu;
            gc[n * 2 * oplane + oplane + i] += gv;
          }
        }
      }
    });
  }
  return {out, mask};
}

}  // namespace kbnet::ops
