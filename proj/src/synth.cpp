#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "kbnet/data_io.hpp"
#include "kbnet/random.hpp"

namespace kbnet {

namespace {

constexpr double kTau = 6.283185307179586476925286766559;

// Smooth band-limited albedo on a plane: a fixed offset plus a few low-
// frequency cosine waves in the surface's 2-D coordinates. No clamping, so
// bilinear interpolation of rendered images stays within its smoothness
// error bound.
struct SurfaceTexture {
  std::array<double, 3> base;
  struct Wave {
    double fu, fv;
    double amp;
    std::array<double, 3> phase;
  };
  std::vector<Wave> waves;

  std::array<double, 3> eval(double u, double v) const {
    std::array<double, 3> c = base;
    for (const Wave& w : waves) {
      const double arg = kTau * (w.fu * u + w.fv * v);
      for (int i = 0; i < 3; ++i) c[i] += w.amp * std::cos(arg + w.phase[i]);
    }
    return c;
  }
};

// Planar primitive: n . P = offset, with in-plane axes e1, e2 anchored at p0.
// half_u/half_v <= 0 means infinite extent.
struct Surface {
  std::array<double, 3> p0;
  std::array<double, 3> normal;  // unit
  std::array<double, 3> e1, e2;  // unit, orthogonal to normal
  double half_u = 0.0, half_v = 0.0;
  SurfaceTexture tex;
};

double dot3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

std::array<double, 3> sub3(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

SurfaceTexture make_texture(Rng& rng) {
  SurfaceTexture t;
  for (int i = 0; i < 3; ++i) t.base[i] = rng.uniform(0.38, 0.62);
  const int n_waves = 6;
  double amp_total = rng.uniform(0.30, 0.38);
  std::vector<double> raw(n_waves);
  double raw_sum = 0.0;
  for (int i = 0; i < n_waves; ++i) {
    raw[i] = rng.uniform(0.5, 1.0);
    raw_sum += raw[i];
  }
  for (int i = 0; i < n_waves; ++i) {
    SurfaceTexture::Wave w;
    const double f = rng.uniform(0.15, 0.85);  // cycles per meter
    const double ang = rng.uniform(0.0, kTau);
    w.fu = f * std::cos(ang);
    w.fv = f * std::sin(ang);
    w.amp = amp_total * raw[i] / raw_sum;
    for (int c = 0; c < 3; ++c) w.phase[c] = rng.uniform(0.0, kTau);
    t.waves.push_back(w);
  }
  return t;
}

std::vector<Surface> make_scene(Rng& rng) {
  std::vector<Surface> scene;

  auto axis_surface = [&](std::array<double, 3> p0, std::array<double, 3> n,
                          std::array<double, 3> e1, std::array<double, 3> e2, double hu,
                          double hv) {
    Surface s;
    s.p0 = p0;
    s.normal = n;
    s.e1 = e1;
    s.e2 = e2;
    s.half_u = hu;
    s.half_v = hv;
    s.tex = make_texture(rng);
    return s;
  };

  // Room shell: back wall, floor, two side walls (all effectively infinite).
  scene.push_back(axis_surface({0, 0, 6.2}, {0, 0, -1}, {1, 0, 0}, {0, 1, 0}, 0, 0));
  scene.push_back(axis_surface({0, 1.15, 0}, {0, -1, 0}, {1, 0, 0}, {0, 0, 1}, 0, 0));
  scene.push_back(axis_surface({-3.2, 0, 0}, {1, 0, 0}, {0, 0, 1}, {0, 1, 0}, 0, 0));
  scene.push_back(axis_surface({3.2, 0, 0}, {-1, 0, 0}, {0, 0, 1}, {0, 1, 0}, 0, 0));

  // Slanted floating cards in front of the shell.
  const int n_cards = 4;
  for (int i = 0; i < n_cards; ++i) {
    const double cz = rng.uniform(2.0, 4.2);
    const double cx = rng.uniform(-1.4, 1.4);
    const double cy = rng.uniform(-0.7, 0.7);
    const double yaw = rng.uniform(-0.6, 0.6);
    const double pitch = rng.uniform(-0.5, 0.5);
    // normal tilted away from -z
    std::array<double, 3> n = {std::sin(yaw) * std::cos(pitch), std::sin(pitch),
                               -std::cos(yaw) * std::cos(pitch)};
    // e1 orthogonal to n and roughly horizontal
    std::array<double, 3> e1 = {std::cos(yaw), 0.0, std::sin(yaw)};
    std::array<double, 3> e2 = {n[1] * e1[2] - n[2] * e1[1], n[2] * e1[0] - n[0] * e1[2],
                                n[0] * e1[1] - n[1] * e1[0]};
    const double norm = std::sqrt(dot3(e2, e2));
    for (double& v : e2) v /= norm;
    Surface s;
    s.p0 = {cx, cy, cz};
    s.normal = n;
    s.e1 = e1;
    s.e2 = e2;
    s.half_u = rng.uniform(0.55, 1.0);
    s.half_v = rng.uniform(0.45, 0.85);
    s.tex = make_texture(rng);
    scene.push_back(s);
  }
  return scene;
}

Pose trajectory_pose(MotionProfile motion, int i) {
  Pose p;
  switch (motion) {
    case MotionProfile::Static:
      return p;
    case MotionProfile::TranslateX:
      p.translation = {0.03 * i, 0.0, 0.0};
      return p;
    case MotionProfile::Mixed: {
      const double t = static_cast<double>(i);
      const std::array<double, 3> tr = {0.35 * std::sin(kTau * t / 120.0),
                                        0.12 * std::sin(kTau * t / 90.0 + 1.0),
                                        0.35 * std::sin(kTau * t / 150.0)};
      const double yaw = 0.030 * std::sin(kTau * t / 100.0);
      const double pitch = 0.015 * std::sin(kTau * t / 80.0 + 0.5);
      const double roll = 0.010 * std::sin(kTau * t / 60.0 + 1.3);
      p = exp_se3({pitch, yaw, roll, tr[0], tr[1], tr[2]});
      return p;
    }
  }
  return p;
}

}  // namespace

SynthScene synth_scene_full(const SynthSpec& spec) {
  if (spec.width % 32 != 0 || spec.height % 32 != 0) {
    throw std::invalid_argument("synth_scene: resolution must be divisible by 32");
  }
  if (spec.n_frames < 1) throw std::invalid_argument("synth_scene: n_frames must be >= 1");
  spec.k.validate();

  Rng scene_rng(Rng::mix(spec.seed, 0x5ce'e));
  const std::vector<Surface> scene = make_scene(scene_rng);

  SynthScene out;
  const int h = spec.height, w = spec.width;
  const std::int64_t plane = static_cast<std::int64_t>(h) * w;

  for (int fi = 0; fi < spec.n_frames; ++fi) {
    const Pose pose = trajectory_pose(spec.motion, fi);  // camera-to-world
    Tensor image = Tensor::zeros({1, 3, h, w});
    Tensor gt = Tensor::zeros({1, 1, h, w});
    std::vector<std::int32_t> ids(static_cast<std::size_t>(plane), -1);

    double* ip = image.data();
    double* gp = gt.data();
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const std::int64_t px = static_cast<std::int64_t>(y) * w + x;
        const auto l = lift(spec.k, x, y);
        const std::array<double, 3> dir = {
            pose.rotation[0] * l[0] + pose.rotation[1] * l[1] + pose.rotation[2],
            pose.rotation[3] * l[0] + pose.rotation[4] * l[1] + pose.rotation[5],
            pose.rotation[6] * l[0] + pose.rotation[7] * l[1] + pose.rotation[8]};
        const std::array<double, 3>& org = pose.translation;

        double best = 1e30;
        int best_id = -1;
        std::array<double, 3> best_p{};
        for (std::size_t si = 0; si < scene.size(); ++si) {
          const Surface& s = scene[si];
          const double denom = dot3(s.normal, dir);
          if (std::abs(denom) < 1e-12) continue;
          const double z = dot3(s.normal, sub3(s.p0, org)) / denom;
          if (z < 0.2 || z >= best) continue;
          const std::array<double, 3> hit = {org[0] + z * dir[0], org[1] + z * dir[1],
                                             org[2] + z * dir[2]};
          if (s.half_u > 0.0) {
            const auto rel = sub3(hit, s.p0);
            if (std::abs(dot3(rel, s.e1)) > s.half_u || std::abs(dot3(rel, s.e2)) > s.half_v)
              continue;
          }
          best = z;
          best_id = static_cast<int>(si);
          best_p = hit;
        }
        if (best_id < 0) continue;  // geometrically unreachable with the room shell
        gp[px] = best;
        ids[static_cast<std::size_t>(px)] = best_id;
        const Surface& s = scene[static_cast<std::size_t>(best_id)];
        const auto rel = sub3(best_p, s.p0);
        const auto color = s.tex.eval(dot3(rel, s.e1), dot3(rel, s.e2));
        for (int c = 0; c < 3; ++c) ip[c * plane + px] = color[c];
      }
    }

    Frame f;
    f.index = fi;
    f.image = image;
    f.gt = gt;
    f.k = spec.k;
    f.pose_to_world = pose;
    f.sparse = subsample_sparse(gt, spec.sparse_density, SampleStrategy::UniformRandom,
                                Rng::mix(spec.seed, 9000 + static_cast<std::uint64_t>(fi)));
    out.frames.push_back(std::move(f));
    out.surface_ids.push_back(std::move(ids));
  }
  return out;
}

std::vector<Frame> synth_scene(const SynthSpec& spec) {
  return synth_scene_full(spec).frames;
}

}  // namespace kbnet
