#include <cmath>
#include <stdexcept>

#include "kbnet/ops.hpp"
#include "ops_common.hpp"

namespace kbnet::ops {

using detail::broadcast_shape;
using detail::broadcast_strides;
using detail::BStrides;
using detail::make_output;

namespace {

// dfa/dfb compute the local partials wrt a and b from (a, b, out) values.
template <class F, class DFA, class DFB>
Tensor binary_op(Tape& tape, const Tensor& a, const Tensor& b, const char* name, F f, DFA dfa,
                 DFB dfb) {
  const Shape4 os = broadcast_shape(a.shape(), b.shape(), name);
  Tensor out = make_output(tape, os, {&a, &b});
  const BStrides sa = broadcast_strides(a.shape(), os, name);
  const BStrides sb = broadcast_strides(b.shape(), os, name);

  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  std::int64_t o = 0;
  for (int n = 0; n < os.n; ++n)
    for (int c = 0; c < os.c; ++c)
      for (int y = 0; y < os.h; ++y) {
        const std::int64_t ra = n * sa.n + c * sa.c + y * sa.h;
        const std::int64_t rb = n * sb.n + c * sb.c + y * sb.h;
        for (int x = 0; x < os.w; ++x, ++o) {
          po[o] = f(pa[ra + x * sa.w], pb[rb + x * sb.w]);
        }
      }

  if (out.requires_grad()) {
    Tensor ac = a, bc = b, oc = out;
    tape.record([ac, bc, oc, sa, sb, dfa, dfb]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      const Shape4 os = oc.shape();
      const double* pa = ac.data();
      const double* pb = bc.data();
      const double* po = oc.data();
      double* ga = ac.requires_grad() ? ac.grad().data() : nullptr;
      double* gb = bc.requires_grad() ? bc.grad().data() : nullptr;
      std::int64_t o = 0;
      for (int n = 0; n < os.n; ++n)
        for (int c = 0; c < os.c; ++c)
          for (int y = 0; y < os.h; ++y) {
            const std::int64_t ra = n * sa.n + c * sa.c + y * sa.h;
            const std::int64_t rb = n * sb.n + c * sb.c + y * sb.h;
            for (int x = 0; x < os.w; ++x, ++o) {
              const double av = pa[ra + x * sa.w];
              const double bv = pb[rb + x * sb.w];
              if (ga) ga[ra + x * sa.w] += g[o] * dfa(av, bv, po[o]);
              if (gb) gb[rb + x * sb.w] += g[o] * dfb(av, bv, po[o]);
            }
          }
    });
  }
  return out;
}

template <class F, class DF>
Tensor unary_op(Tape& tape, const Tensor& a, F f, DF df) {
  Tensor out = make_output(tape, a.shape(), {&a});
  const double* pa = a.data();
  double* po = out.data();
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) po[i] = f(pa[i]);

  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, df]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      const double* pa = ac.data();
      const double* po = oc.data();
      double* ga = ac.grad().data();
      const std::int64_t n = ac.numel();
      for (std::int64_t i = 0; i < n; ++i) ga[i] += g[i] * df(pa[i], po[i]);
    });
  }
  return out;
}

}  // namespace

Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_op(
      tape, a, b, "add", [](double x, double y) { return x + y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return 1.0; });
}

Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_op(
      tape, a, b, "sub", [](double x, double y) { return x - y; },
      [](double, double, double) { return 1.0; }, [](double, double, double) { return -1.0; });
}

Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_op(
      tape, a, b, "mul", [](double x, double y) { return x * y; },
      [](double, double y, double) { return y; }, [](double x, double, double) { return x; });
}

Tensor div(Tape& tape, const Tensor& a, const Tensor& b) {
  return binary_op(
      tape, a, b, "div", [](double x, double y) { return x / y; },
      [](double, double y, double) { return 1.0 / y; },
      [](double, double y, double o) { return -o / y; });
}

Tensor add_scalar(Tape& tape, const Tensor& a, double s) {
  return unary_op(
      tape, a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(Tape& tape, const Tensor& a, double s) {
  return unary_op(
      tape, a, [s](double x) { return x * s; }, [s](double, double) { return s; });
}

Tensor neg(Tape& tape, const Tensor& a) { return mul_scalar(tape, a, -1.0); }

Tensor abs(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a, [](double x) { return std::abs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor square(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor exp(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor sqrt(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a,
      [](double x) {
        if (x < 0.0) throw std::invalid_argument("sqrt of negative value");
        return std::sqrt(x);
      },
      [](double, double y) { return 0.5 / y; });
}

Tensor sigmoid(Tape& tape, const Tensor& a) {
  return unary_op(
      tape, a,
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor leaky_relu(Tape& tape, const Tensor& a, double slope) {
  return unary_op(
      tape, a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor sum(Tape& tape, const Tensor& a) {
  Tensor out = make_output(tape, {1, 1, 1, 1}, {&a});
  const double* pa = a.data();
  double acc = 0.0;
  const std::int64_t n = a.numel();
  for (std::int64_t i = 0; i < n; ++i) acc += pa[i];
  out.data()[0] = acc;

  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      double* ga = ac.grad().data();
      const std::int64_t n = ac.numel();
      for (std::int64_t i = 0; i < n; ++i) ga[i] += g[0];
    });
  }
  return out;
}

Tensor mean(Tape& tape, const Tensor& a) {
  return mul_scalar(tape, sum(tape, a), 1.0 / static_cast<double>(a.numel()));
}

Tensor channel_mean(Tape& tape, const Tensor& a) {
  const Shape4 s = a.shape();
  Tensor out = make_output(tape, {s.n, 1, s.h, s.w}, {&a});
  const double* pa = a.data();
  double* po = out.data();
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  const double inv = 1.0 / s.c;
  for (int n = 0; n < s.n; ++n) {
    for (std::int64_t i = 0; i < plane; ++i) {
      double acc = 0.0;
      for (int c = 0; c < s.c; ++c) acc += pa[(n * s.c + c) * plane + i];
      po[n * plane + i] = acc * inv;
    }
  }
  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, plane, inv]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      const Shape4 s = ac.shape();
      double* ga = ac.grad().data();
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < s.c; ++c)
          for (std::int64_t i = 0; i < plane; ++i)
            ga[(n * s.c + c) * plane + i] += g[n * plane + i] * inv;
    });
  }
  return out;
}

Tensor spatial_mean(Tape& tape, const Tensor& a) {
  const Shape4 s = a.shape();
  Tensor out = make_output(tape, {s.n, s.c, 1, 1}, {&a});
  const double* pa = a.data();
  double* po = out.data();
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  const double inv = 1.0 / static_cast<double>(plane);
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    double acc = 0.0;
    for (std::int64_t i = 0; i < plane; ++i) acc += pa[nc * plane + i];
    po[nc] = acc * inv;
  }
  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, plane, inv]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      const Shape4 s = ac.shape();
      double* ga = ac.grad().data();
      for (int nc = 0; nc < s.n * s.c; ++nc)
        for (std::int64_t i = 0; i < plane; ++i) ga[nc * plane + i] += g[nc] * inv;
    });
  }
  return out;
}

Tensor concat_channels(Tape& tape, const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Shape4 s0 = parts[0].shape();
  int ctot = 0;
  for (const Tensor& t : parts) {
    const Shape4 s = t.shape();
    if (s.n != s0.n || s.h != s0.h || s.w != s0.w) {
      throw std::invalid_argument("concat_channels: mismatched shapes " + s0.str() + " vs " +
                                  s.str());
    }
    ctot += s.c;
  }
  std::vector<const Tensor*> ptrs;
  for (const Tensor& t : parts) ptrs.push_back(&t);
  Tensor out = Tensor::zeros({s0.n, ctot, s0.h, s0.w});
  bool rg = false;
  for (const Tensor& t : parts) rg = rg || t.requires_grad();
  out.set_requires_grad(rg && tape.recording());

  const std::int64_t plane = static_cast<std::int64_t>(s0.h) * s0.w;
  double* po = out.data();
  for (int n = 0; n < s0.n; ++n) {
    int co = 0;
    for (const Tensor& t : parts) {
      const int tc = t.shape().c;
      const double* pt = t.data() + static_cast<std::int64_t>(n) * tc * plane;
      double* dst = po + (static_cast<std::int64_t>(n) * ctot + co) * plane;
      for (std::int64_t i = 0; i < static_cast<std::int64_t>(tc) * plane; ++i) dst[i] = pt[i];
      co += tc;
    }
  }

  if (out.requires_grad()) {
    std::vector<Tensor> pc = parts;
    Tensor oc = out;
    tape.record([pc, oc, plane, ctot]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      const int nb = oc.shape().n;
      for (int n = 0; n < nb; ++n) {
        int co = 0;
        for (Tensor& t : pc) {
          const int tc = t.shape().c;
          if (t.requires_grad()) {
            double* gt = t.grad().data() + static_cast<std::int64_t>(n) * tc * plane;
            const double* src = g + (static_cast<std::int64_t>(n) * ctot + co) * plane;
            for (std::int64_t i = 0; i < static_cast<std::int64_t>(tc) * plane; ++i)
              gt[i] += src[i];
          }
          co += tc;
        }
      }
    });
  }
  return out;
}

Tensor slice_channels(Tape& tape, const Tensor& a, int c0, int c1) {
  const Shape4 s = a.shape();
  if (c0 < 0 || c1 > s.c || c0 >= c1) {
    throw std::invalid_argument("slice_channels: bad range [" + std::to_string(c0) + ", " +
                                std::to_string(c1) + ") for shape " + s.str());
  }
  Tensor out = make_output(tape, {s.n, c1 - c0, s.h, s.w}, {&a});
  const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
  const double* pa = a.data();
  double* po = out.data();
  const int oc = c1 - c0;
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < oc; ++c) {
      const double* src = pa + (static_cast<std::int64_t>(n) * s.c + c0 + c) * plane;
      double* dst = po + (static_cast<std::int64_t>(n) * oc + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) dst[i] = src[i];
    }

  if (out.requires_grad()) {
    Tensor ac = a, occ = out;
    tape.record([ac, occ, plane, c0, oc]() mutable {
      const double* g = occ.grad_data_or_null();
      if (!g) return;
      const Shape4 s = ac.shape();
      double* ga = ac.grad().data();
      for (int n = 0; n < s.n; ++n)
        for (int c = 0; c < oc; ++c) {
          double* dst = ga + (static_cast<std::int64_t>(n) * s.c + c0 + c) * plane;
          const double* src = g + (static_cast<std::int64_t>(n) * oc + c) * plane;
          for (std::int64_t i = 0; i < plane; ++i) dst[i] += src[i];
        }
    });
  }
  return out;
}

Tensor upsample_nearest2(Tape& tape, const Tensor& a) {
  const Shape4 s = a.shape();
  Tensor out = make_output(tape, {s.n, s.c, s.h * 2, s.w * 2}, {&a});
  const double* pa = a.data();
  double* po = out.data();
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* src = pa + static_cast<std::int64_t>(nc) * s.h * s.w;
    double* dst = po + static_cast<std::int64_t>(nc) * s.h * s.w * 4;
    for (int y = 0; y < 2 * s.h; ++y)
      for (int x = 0; x < 2 * s.w; ++x)
        dst[static_cast<std::int64_t>(y) * 2 * s.w + x] = src[(y / 2) * s.w + x / 2];
  }
  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      const Shape4 s = ac.shape();
      double* ga = ac.grad().data();
      for (int nc = 0; nc < s.n * s.c; ++nc) {
        double* dst = ga + static_cast<std::int64_t>(nc) * s.h * s.w;
        const double* src = g + static_cast<std::int64_t>(nc) * s.h * s.w * 4;
        for (int y = 0; y < 2 * s.h; ++y)
          for (int x = 0; x < 2 * s.w; ++x)
            dst[(y / 2) * s.w + x / 2] += src[static_cast<std::int64_t>(y) * 2 * s.w + x];
      }
    });
  }
  return out;
}

Tensor avg_pool2(Tape& tape, const Tensor& a) {
  const Shape4 s = a.shape();
  if (s.h % 2 != 0 || s.w % 2 != 0) {
    throw std::invalid_argument("avg_pool2 requires even spatial dims, got " + s.str());
  }
  Tensor out = make_output(tape, {s.n, s.c, s.h / 2, s.w / 2}, {&a});
  const double* pa = a.data();
  double* po = out.data();
  const int oh = s.h / 2, ow = s.w / 2;
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* src = pa + static_cast<std::int64_t>(nc) * s.h * s.w;
    double* dst = po + static_cast<std::int64_t>(nc) * oh * ow;
    for (int y = 0; y < oh; ++y)
      for (int x = 0; x < ow; ++x) {
        const double* r0 = src + (2 * y) * s.w + 2 * x;
        const double* r1 = r0 + s.w;
        dst[y * ow + x] = 0.25 * (r0[0] + r0[1] + r1[0] + r1[1]);
      }
  }
  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, oh, ow]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      const Shape4 s = ac.shape();
      double* ga = ac.grad().data();
      for (int nc = 0; nc < s.n * s.c; ++nc) {
        double* dst = ga + static_cast<std::int64_t>(nc) * s.h * s.w;
        const double* src = g + static_cast<std::int64_t>(nc) * oh * ow;
        for (int y = 0; y < oh; ++y)
          for (int x = 0; x < ow; ++x) {
            const double gv = 0.25 * src[y * ow + x];
            dst[(2 * y) * s.w + 2 * x] += gv;
            dst[(2 * y) * s.w + 2 * x + 1] += gv;
            dst[(2 * y + 1) * s.w + 2 * x] += gv;
            dst[(2 * y + 1) * s.w + 2 * x + 1] += gv;
          }
      }
    });
  }
  return out;
}

Tensor box_filter3(Tape& tape, const Tensor& a) {
  const Shape4 s = a.shape();
  Tensor out = make_output(tape, s, {&a});
  const double* pa = a.data();
  double* po = out.data();
  const double inv9 = 1.0 / 9.0;
  auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    const double* src = pa + static_cast<std::int64_t>(nc) * s.h * s.w;
    double* dst = po + static_cast<std::int64_t>(nc) * s.h * s.w;
    for (int y = 0; y < s.h; ++y)
      for (int x = 0; x < s.w; ++x) {
        double acc = 0.0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx)
            acc += src[clampi(y + dy, s.h - 1) * s.w + clampi(x + dx, s.w - 1)];
        dst[y * s.w + x] = acc * inv9;
      }
  }
  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc, inv9, clampi]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      const Shape4 s = ac.shape();
      double* ga = ac.grad().data();
      for (int nc = 0; nc < s.n * s.c; ++nc) {
        double* dst = ga + static_cast<std::int64_t>(nc) * s.h * s.w;
        const double* src = g + static_cast<std::int64_t>(nc) * s.h * s.w;
        for (int y = 0; y < s.h; ++y)
          for (int x = 0; x < s.w; ++x) {
            const double gv = src[y * s.w + x] * inv9;
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx)
                dst[clampi(y + dy, s.h - 1) * s.w + clampi(x + dx, s.w - 1)] += gv;
          }
      }
    });
  }
  return out;
}

Tensor grad_x(Tape& tape, const Tensor& a) {
  const Shape4 s = a.shape();
  if (s.w < 2) throw std::invalid_argument("grad_x requires width >= 2, got " + s.str());
  Tensor out = make_output(tape, {s.n, s.c, s.h, s.w - 1}, {&a});
  const double* pa = a.data();
  double* po = out.data();
  for (int nc = 0; nc < s.n * s.c; ++nc)
    for (int y = 0; y < s.h; ++y) {
      const double* src = pa + (static_cast<std::int64_t>(nc) * s.h + y) * s.w;
      double* dst = po + (static_cast<std::int64_t>(nc) * s.h + y) * (s.w - 1);
      for (int x = 0; x < s.w - 1; ++x) dst[x] = src[x + 1] - src[x];
    }
  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      const Shape4 s = ac.shape();
      double* ga = ac.grad().data();
      for (int nc = 0; nc < s.n * s.c; ++nc)
        for (int y = 0; y < s.h; ++y) {
          double* dst = ga + (static_cast<std::int64_t>(nc) * s.h + y) * s.w;
          const double* src = g + (static_cast<std::int64_t>(nc) * s.h + y) * (s.w - 1);
          for (int x = 0; x < s.w - 1; ++x) {
            dst[x + 1] += src[x];
            dst[x] -= src[x];
          }
        }
    });
  }
  return out;
}

Tensor grad_y(Tape& tape, const Tensor& a) {
  const Shape4 s = a.shape();
  if (s.h < 2) throw std::invalid_argument("grad_y requires height >= 2, got " + s.str());
  Tensor out = make_output(tape, {s.n, s.c, s.h - 1, s.w}, {&a});
  const double* pa = a.data();
  double* po = out.data();
  for (int nc = 0; nc < s.n * s.c; ++nc)
    for (int y = 0; y < s.h - 1; ++y) {
      const double* src = pa + (static_cast<std::int64_t>(nc) * s.h + y) * s.w;
      double* dst = po + (static_cast<std::int64_t>(nc) * (s.h - 1) + y) * s.w;
      for (int x = 0; x < s.w; ++x) dst[x] = src[x + s.w] - src[x];
    }
  if (out.requires_grad()) {
    Tensor ac = a, oc = out;
    tape.record([ac, oc]() mutable {
      const double* g = oc.grad_data_or_null();
      if (!g) return;
      const Shape4 s = ac.shape();
      double* ga = ac.grad().data();
      for (int nc = 0; nc < s.n * s.c; ++nc)
        for (int y = 0; y < s.h - 1; ++y) {
          double* dst = ga + (static_cast<std::int64_t>(nc) * s.h + y) * s.w;
          const double* src = g + (static_cast<std::int64_t>(nc) * (s.h - 1) + y) * s.w;
          for (int x = 0; x < s.w; ++x) {
            dst[x + s.w] += src[x];
            dst[x] -= src[x];
          }
        }
    });
  }
  return out;
}

}  // namespace kbnet::ops
