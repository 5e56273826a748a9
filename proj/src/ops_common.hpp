#pragma once

#include <cstdint>
#include <initializer_list>
#include <stdexcept>
#include <string>

#include "kbnet/tape.hpp"
#include "kbnet/tensor.hpp"

namespace kbnet::ops::detail {

using Impl = kbnet::detail::TensorImpl;

// Output tensor for an op: requires_grad iff recording and any input does.
inline Tensor make_output(Tape& tape, Shape4 s, std::initializer_list<const Tensor*> inputs) {
  Tensor out = Tensor::zeros(s);
  bool rg = false;
  for (const Tensor* t : inputs) {
    if (t->defined() && t->requires_grad()) rg = true;
  }
  out.set_requires_grad(rg && tape.recording());
  return out;
}

// Row-major strides with 0 in dimensions broadcast from size 1.
struct BStrides {
  std::int64_t n, c, h, w;
};

inline BStrides broadcast_strides(const Shape4& in, const Shape4& out, const char* op) {
  auto dim = [&](int i, int o) -> std::int64_t {
    if (i != o && i != 1) {
      throw std::invalid_argument(std::string(op) + ": shapes are not broadcast-compatible: " +
                                  in.str() + " vs " + out.str());
    }
    return 0;  // placeholder, filled below
  };
  (void)dim(in.n, out.n);
  (void)dim(in.c, out.c);
  (void)dim(in.h, out.h);
  (void)dim(in.w, out.w);
  BStrides s;
  s.w = (in.w == 1 && out.w != 1) ? 0 : 1;
  s.h = (in.h == 1 && out.h != 1) ? 0 : in.w;
  s.c = (in.c == 1 && out.c != 1) ? 0 : static_cast<std::int64_t>(in.h) * in.w;
  s.n = (in.n == 1 && out.n != 1) ? 0 : static_cast<std::int64_t>(in.c) * in.h * in.w;
  return s;
}

inline Shape4 broadcast_shape(const Shape4& a, const Shape4& b, const char* op) {
  auto pick = [&](int x, int y) {
    if (x == y) return x;
    if (x == 1) return y;
    if (y == 1) return x;
    throw std::invalid_argument(std::string(op) + ": shapes are not broadcast-compatible: " +
                                a.str() + " vs " + b.str());
  };
  return Shape4{pick(a.n, b.n), pick(a.c, b.c), pick(a.h, b.h), pick(a.w, b.w)};
}

}  // namespace kbnet::ops::detail
