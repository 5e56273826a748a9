#include <limits>
#include <stdexcept>
#include <vector>

#include "kbnet/ops.hpp"
#include "ops_common.hpp"

namespace kbnet::ops {

using detail::make_output;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Two-pass (horizontal then vertical) windowed min/max over stride-1 odd
// windows. Equivalent to a direct k x k scan, including the smallest-linear-
// index tie rule: the row pass prefers the smallest x, the column pass the
// smallest y.
struct PoolPassResult {
  std::vector<double> val;
  std::vector<std::int32_t> arg;  // linear index within the plane, -1 if none
};

template <bool kMin>
void pool_plane(const double* src, int h, int w, int r, bool mask_invalid, double* out,
                std::int32_t* arg) {
  std::vector<double> rowv(static_cast<std::size_t>(h) * w);
  std::vector<std::int32_t> rowa(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double best = kMin ? kInf : -kInf;
      std::int32_t bi = -1;
      const int lo = x - r < 0 ? 0 : x - r;
      const int hi = x + r >= w ? w - 1 : x + r;
      for (int xx = lo; xx <= hi; ++xx) {
        double v = src[y * w + xx];
        if (mask_invalid && v <= 0.0) continue;
        if (kMin ? (v < best) : (v > best)) {
          best = v;
          bi = y * w + xx;
        }
      }
      rowv[y * w + x] = bi < 0 ? (kMin ? kInf : -kInf) : best;
      rowa[y * w + x] = bi;
    }
  }
  for (int y = 0; y < h; ++y) {
    const int lo = y - r < 0 ? 0 : y - r;
    const int hi = y + r >= h ? h - 1 : y + r;
    for (int x = 0; x < w; ++x) {
      double best = kMin ? kInf : -kInf;
      std::int32_t bi = -1;
      for (int yy = lo; yy <= hi; ++yy) {
        const double v = rowv[yy * w + x];
        if (rowa[yy * w + x] < 0) continue;
        if (kMin ? (v < best) : (v > best)) {
          best = v;
          bi = rowa[yy * w + x];
        }
      }
      out[y * w + x] = bi < 0 ? 0.0 : best;
      arg[y * w + x] = bi;
    }
  }
}

template <bool kMin>
Tensor pool_impl(Tape& tape, const Tensor& a, int k, const char* name) {
  if (k < 1 || k % 2 == 0) {
    throw std::invalid_argument(std::string(name) + ": kernel size must be odd, got " +
                                std::to_string(k));
  }
  const Shape4 s = a.shape();
  Tensor out = make_output(tape, s, {&a});
  const int r = k / 2;
  auto args = std::make_shared<std::vector<std::int32_t>>(a.numel());

  const double* pa = a.data();
  double* po = out.data();
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    pool_plane<kMin>(pa + nc * plane, s.h, s.w, r, /*mask_invalid=*/kMin, po + nc * plane,
                     args->data() + nc * plane);
  }

  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, args, plane]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      const Shape4 s = ac.shape();
      double* ga = ac.grad().data();
      for (int nc = 0; nc < s.n * s.c; ++nc) {
        const std::int32_t* arg = args->data() + nc * plane;
        const double* gsrc = g + nc * plane;
        double* gdst = ga + nc * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          if (arg[i] >= 0) gdst[arg[i]] += gsrc[i];
        }
      }
    });
  }
  return out;
}

}  // namespace

Tensor masked_min_pool(Tape& tape, const Tensor& a, int k) {
  return pool_impl<true>(tape, a, k, "masked_min_pool");
}

Tensor masked_max_pool(Tape& tape, const Tensor& a, int k) {
  return pool_impl<false>(tape, a, k, "masked_max_pool");
}

}  // namespace kbnet::ops
