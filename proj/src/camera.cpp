#include "kbnet/camera.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "ops_common.hpp"
#include "so3_detail.hpp"

namespace kbnet {

void Intrinsics::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0)) {
    std::ostringstream os;
    os << "intrinsics require positive focal lengths, got fx=" << fx << " fy=" << fy;
    throw std::invalid_argument(os.str());
  }
  if (!std::isfinite(fx) || !std::isfinite(fy) || !std::isfinite(cx) || !std::isfinite(cy)) {
    throw std::invalid_argument("intrinsics must be finite");
  }
}

Intrinsics scale_intrinsics(const Intrinsics& k, int level) {
  if (level < 0) throw std::invalid_argument("scale_intrinsics: level must be >= 0");
  const double s = std::ldexp(1.0, -level);  // 2^-level
  return Intrinsics{k.fx * s, k.fy * s, k.cx * s, k.cy * s};
}

std::array<double, 3> lift(const Intrinsics& k, double u, double v) {
  return {(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
}

std::array<double, 3> backproject(const Intrinsics& k, double u, double v, double depth) {
  const auto r = lift(k, u, v);
  return {r[0] * depth, r[1] * depth, depth};
}

std::array<double, 2> project(const Intrinsics& k, const std::array<double, 3>& p) {
  if (!(p[2] > 0.0)) {
    std::ostringstream os;
    os << "behind-camera: cannot project point with Z=" << p[2];
    throw std::invalid_argument(os.str());
  }
  return {k.fx * p[0] / p[2] + k.cx, k.fy * p[1] / p[2] + k.cy};
}

std::array<double, 3> Pose::apply(const std::array<double, 3>& p) const {
  const auto& r = rotation;
  return {r[0] * p[0] + r[1] * p[1] + r[2] * p[2] + translation[0],
          r[3] * p[0] + r[4] * p[1] + r[5] * p[2] + translation[1],
          r[6] * p[0] + r[7] * p[1] + r[8] * p[2] + translation[2]};
}

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += a.rotation[3 * i + k] * b.rotation[3 * k + j];
      out.rotation[3 * i + j] = acc;
    }
  const auto t = a.apply({b.translation[0], b.translation[1], b.translation[2]});
  out.translation = t;
  return out;
}

Pose inverse(const Pose& p) {
  Pose out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) out.rotation[3 * i + j] = p.rotation[3 * j + i];
  for (int i = 0; i < 3; ++i) {
    out.translation[i] = -(out.rotation[3 * i + 0] * p.translation[0] +
                           out.rotation[3 * i + 1] * p.translation[1] +
                           out.rotation[3 * i + 2] * p.translation[2]);
  }
  return out;
}

Pose exp_se3(const std::array<double, 6>& v) {
  Pose p;
  so3::rodrigues(v.data(), p.rotation.data());
  p.translation = {v[3], v[4], v[5]};
  return p;
}

std::vector<Intrinsics> read_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open calibration file: " + path);
  std::vector<Intrinsics> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream is(line);
    Intrinsics k;
    std::string extra;
    if (!(is >> k.fx >> k.fy >> k.cx >> k.cy) || (is >> extra)) {
      throw std::runtime_error("calibration file " + path + " line " + std::to_string(lineno) +
                               ": expected exactly four floats 'fx fy cx cy'");
    }
    k.validate();
    out.push_back(k);
  }
  if (out.empty()) throw std::runtime_error("calibration file " + path + " has no cameras");
  return out;
}

Tensor lift_rays(const Intrinsics& k, int h, int w) {
  Tensor t = Tensor::zeros({1, 3, h, w});
  double* p = t.data();
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const std::int64_t i = static_cast<std::int64_t>(y) * w + x;
      p[i] = (x - k.cx) / k.fx;
      p[plane + i] = (y - k.cy) / k.fy;
      p[2 * plane + i] = 1.0;
    }
  return t;
}

Se3Tensors se3_exp(Tape& tape, const Tensor& v6) {
  const Shape4 s = v6.shape();
  if (s.c != 6 || s.h != 1 || s.w != 1) {
    throw std::invalid_argument("se3_exp expects shape (n,6,1,1), got " + s.str());
  }
  Tensor rot = ops::detail::make_output(tape, {s.n, 9, 1, 1}, {&v6});
  Tensor tr = ops::detail::make_output(tape, {s.n, 3, 1, 1}, {&v6});
  const double* pv = v6.data();
  for (int n = 0; n < s.n; ++n) {
    so3::rodrigues(pv + 6 * n, rot.data() + 9 * n);
    for (int i = 0; i < 3; ++i) tr.data()[3 * n + i] = pv[6 * n + 3 + i];
  }
  if (rot.requires_grad() || tr.requires_grad()) {
    Tensor vc = v6, rc = rot, tc = tr;
    tape.record([vc, rc, tc]() mutable {
      if (!vc.requires_grad()) return;
      const int nb = vc.shape().n;
      double* gv = vc.grad().data();
      const double* gr = rc.grad_data_or_null();
      const double* gt = tc.grad_data_or_null();
      for (int n = 0; n < nb; ++n) {
        if (gr) so3::rodrigues_backward(vc.data() + 6 * n, gr + 9 * n, gv + 6 * n);
        if (gt) {
          for (int i = 0; i < 3; ++i) gv[6 * n + 3 + i] += gt[3 * n + i];
        }
      }
    });
  }
  return {rot, tr};
}

Se3Tensors pose_to_tensors(const Pose& p) {
  Tensor rot = Tensor::from_data({1, 9, 1, 1},
                                 std::vector<double>(p.rotation.begin(), p.rotation.end()));
  Tensor tr = Tensor::from_data({1, 3, 1, 1},
                                std::vector<double>(p.translation.begin(), p.translation.end()));
  return {rot, tr};
}

Pose pose_from_tensors(const Se3Tensors& t, int batch_index) {
  Pose p;
  const double* r = t.rotation.data() + 9 * batch_index;
  const double* tt = t.translation.data() + 3 * batch_index;
  for (int i = 0; i < 9; ++i) p.rotation[i] = r[i];
  for (int i = 0; i < 3; ++i) p.translation[i] = tt[i];
  return p;
}

WarpCoords warp_coords(Tape& tape, const Tensor& depth, const Tensor& rotation,
                       const Tensor& translation, const Intrinsics& k) {
  const Shape4 ds = depth.shape();
  const Shape4 rs = rotation.shape();
  const Shape4 ts = translation.shape();
  if (ds.c != 1) throw std::invalid_argument("warp_coords: depth must be (n,1,h,w), got " + ds.str());
  if (rs.c != 9 || rs.h != 1 || rs.w != 1) {
    throw std::invalid_argument("warp_coords: rotation must be (n,9,1,1), got " + rs.str());
  }
  if (ts.c != 3 || ts.h != 1 || ts.w != 1) {
    throw std::invalid_argument("warp_coords: translation must be (n,3,1,1), got " + ts.str());
  }
  if ((rs.n != ds.n && rs.n != 1) || (ts.n != ds.n && ts.n != 1)) {
    throw std::invalid_argument("warp_coords: pose batch must match depth batch or be 1");
  }

  Tensor coords = ops::detail::make_output(tape, {ds.n, 2, ds.h, ds.w},
                                           {&depth, &rotation, &translation});
  Tensor mask = Tensor::zeros({ds.n, 1, ds.h, ds.w});

  // Per pixel: P = d * (R l) + t with l the lifted ray; (u, v) = project(P).
  const std::int64_t plane = static_cast<std::int64_t>(ds.h) * ds.w;
  constexpr double kZEps = 1e-6;
  const double* pd = depth.data();
  const double* pr = rotation.data();
  const double* pt = translation.data();
  double* pc = coords.data();
  double* pm = mask.data();

  for (int n = 0; n < ds.n; ++n) {
    const double* r = pr + 9 * (rs.n == 1 ? 0 : n);
    const double* t = pt + 3 * (ts.n == 1 ? 0 : n);
    for (int y = 0; y < ds.h; ++y)
      for (int x = 0; x < ds.w; ++x) {
        const std::int64_t i = static_cast<std::int64_t>(y) * ds.w + x;
        const double lx = (x - k.cx) / k.fx;
        const double ly = (y - k.cy) / k.fy;
        const double ax = r[0] * lx + r[1] * ly + r[2];
        const double ay = r[3] * lx + r[4] * ly + r[5];
        const double az = r[6] * lx + r[7] * ly + r[8];
        const double d = pd[n * plane + i];
        const double pz = d * az + t[2];
        if (pz > kZEps) {
          const double px = d * ax + t[0];
          const double py = d * ay + t[1];
          pc[n * 2 * plane + i] = k.fx * px / pz + k.cx;
          pc[n * 2 * plane + plane + i] = k.fy * py / pz + k.cy;
          pm[n * plane + i] = 1.0;
        } else {
          pc[n * 2 * plane + i] = -2.0;
          pc[n * 2 * plane + plane + i] = -2.0;
        }
      }
  }

  if (coords.requires_grad()) {
    Tensor dc = depth, rc = rotation, tc = translation, cc = coords, mc = mask;
    tape.record([dc, rc, tc, cc, mc, k, plane]() mutable {
      const double* g = cc.grad_data_or_null();
      if (!g) return;
      const Shape4 ds = dc.shape();
      const Shape4 rs = rc.shape();
      const Shape4 ts = tc.shape();
      const double* pd = dc.data();
      const double* pr = rc.data();
      const double* pt = tc.data();
      const double* pm = mc.data();
      double* gd = dc.requires_grad() ? dc.grad().data() : nullptr;
      double* gr = rc.requires_grad() ? rc.grad().data() : nullptr;
      double* gt = tc.requires_grad() ? tc.grad().data() : nullptr;

      for (int n = 0; n < ds.n; ++n) {
        const double* r = pr + 9 * (rs.n == 1 ? 0 : n);
        const double* t = pt + 3 * (ts.n == 1 ? 0 : n);
        double* grn = gr ? gr + 9 * (rs.n == 1 ? 0 : n) : nullptr;
        double* gtn = gt ? gt + 3 * (ts.n == 1 ? 0 : n) : nullptr;
        for (int y = 0; y < ds.h; ++y)
          for (int x = 0; x < ds.w; ++x) {
            const std::int64_t i = static_cast<std::int64_t>(y) * ds.w + x;
            if (pm[n * plane + i] == 0.0) continue;
            const double gu = g[n * 2 * plane + i];
            const double gv = g[n * 2 * plane + plane + i];
            if (gu == 0.0 && gv == 0.0) continue;
            const double lx = (x - k.cx) / k.fx;
            const double ly = (y - k.cy) / k.fy;
            const double ax = r[0] * lx + r[1] * ly + r[2];
            const double ay = r[3] * lx + r[4] * ly + r[5];
            const double az = r[6] * lx + r[7] * ly + r[8];
            const double d = pd[n * plane + i];
            const double px = d * ax + t[0];
            const double py = d * ay + t[1];
            const double pz = d * az + t[2];
            // u = fx px/pz + cx, v = fy py/pz + cy
            const double inv_z = 1.0 / pz;
            const double dLdPx = gu * k.fx * inv_z;
            const double dLdPy = gv * k.fy * inv_z;
            const double dLdPz = -(gu * k.fx * px + gv * k.fy * py) * inv_z * inv_z;
            if (gd) gd[n * plane + i] += dLdPx * ax + dLdPy * ay + dLdPz * az;
            if (gtn) {
              gtn[0] += dLdPx;
              gtn[1] += dLdPy;
              gtn[2] += dLdPz;
            }
            if (grn) {
              const double l[3] = {lx, ly, 1.0};
              for (int j = 0; j < 3; ++j) {
                grn[0 + j] += dLdPx * d * l[j];
                grn[3 + j] += dLdPy * d * l[j];
                grn[6 + j] += dLdPz * d * l[j];
              }
            }
          }
      }
    });
  }
  return {coords, mask};
}

Reconstruction reconstruct(Tape& tape, const Tensor& source, const Tensor& depth,
                           const Se3Tensors& pose, const Intrinsics& k) {
  const Shape4 ss = source.shape();
  const Shape4 ds = depth.shape();
  if (ss.h != ds.h || ss.w != ds.w || ss.n != ds.n) {
    throw std::invalid_argument("reconstruct: source " + ss.str() + " and depth " + ds.str() +
                                " must be spatially aligned");
  }
  WarpCoords wc = warp_coords(tape, depth, pose.rotation, pose.translation, k);
  ops::SampleResult sr = ops::bilinear_sample(tape, source, wc.coords);
  // in-bounds mask * front-of-camera mask; constants, no gradient
  Tensor mask = Tensor::zeros(sr.mask.shape());
  const double* a = sr.mask.data();
  const double* b = wc.mask.data();
  double* m = mask.data();
  for (std::int64_t i = 0; i < mask.numel(); ++i) m[i] = a[i] * b[i];
  return {sr.values, mask};
}

Reconstruction reconstruct(Tape& tape, const Tensor& source, const Tensor& depth,
                           const Pose& pose, const Intrinsics& k) {
  return reconstruct(tape, source, depth, pose_to_tensors(pose), k);
}

}  // namespace kbnet
