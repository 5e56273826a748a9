#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "kbnet/camera.hpp"
#include "kbnet/data_io.hpp"
#include "kbnet/gradcheck.hpp"
#include "kbnet/losses.hpp"
#include "kbnet/random.hpp"

using namespace kbnet;

namespace {

// Explicit 3x3 inverse applied to a homogeneous pixel.
std::array<double, 3> lift_by_matrix_inverse(const Intrinsics& k, double u, double v) {
  const auto m = k.matrix();
  const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                     m[2] * (m[3] * m[7] - m[4] * m[6]);
  const double inv[9] = {
      (m[4] * m[8] - m[5] * m[7]) / det, (m[2] * m[7] - m[1] * m[8]) / det,
      (m[1] * m[5] - m[2] * m[4]) / det, (m[5] * m[6] - m[3] * m[8]) / det,
      (m[0] * m[8] - m[2] * m[6]) / det, (m[2] * m[3] - m[0] * m[5]) / det,
      (m[3] * m[7] - m[4] * m[6]) / det, (m[1] * m[6] - m[0] * m[7]) / det,
      (m[0] * m[4] - m[1] * m[3]) / det};
  return {inv[0] * u + inv[1] * v + inv[2], inv[3] * u + inv[4] * v + inv[5],
          inv[6] * u + inv[7] * v + inv[8]};
}

double max_abs_diff(const std::array<double, 3>& a, const std::array<double, 3>& b) {
  double m = 0.0;
  for (int i = 0; i < 3; ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace

TEST_SUITE_BEGIN("camera");

TEST_CASE("lift with identity and scaled calibration") {
  const Intrinsics id{1, 1, 0, 0};
  auto r = lift(id, 3, 4);
  CHECK(r[0] == 3.0);
  CHECK(r[1] == 4.0);
  CHECK(r[2] == 1.0);

  const Intrinsics k2{2, 2, 0, 0};
  r = lift(k2, 4, 6);
  CHECK(r[0] == 2.0);
  CHECK(r[1] == 3.0);
}

TEST_CASE("lift equals explicit matrix inverse") {
  Rng rng(21);
  for (int i = 0; i < 200; ++i) {
    const Intrinsics k{rng.uniform(50, 500), rng.uniform(50, 500), rng.uniform(-20, 300),
                       rng.uniform(-20, 300)};
    const double u = rng.uniform(-100, 700);
    const double v = rng.uniform(-100, 700);
    CHECK(max_abs_diff(lift(k, u, v), lift_by_matrix_inverse(k, u, v)) < 1e-10);
  }
}

TEST_CASE("backproject basics and oracle") {
  const Intrinsics k{100, 100, 50, 40};
  auto p = backproject(k, 50, 40, 7.0);
  CHECK(p[0] == doctest::Approx(0.0));
  CHECK(p[1] == doctest::Approx(0.0));
  CHECK(p[2] == 7.0);

  const Intrinsics id{1, 1, 0, 0};
  p = backproject(id, 1, 2, 5);
  CHECK(p[0] == 5.0);
  CHECK(p[1] == 10.0);
  CHECK(p[2] == 5.0);

  Rng rng(22);
  for (int i = 0; i < 100; ++i) {
    const Intrinsics kk{rng.uniform(50, 500), rng.uniform(50, 500), rng.uniform(0, 300),
                        rng.uniform(0, 300)};
    const double u = rng.uniform(0, 600), v = rng.uniform(0, 600), d = rng.uniform(0.1, 80);
    const auto l = lift_by_matrix_inverse(kk, u, v);
    const auto bp = backproject(kk, u, v, d);
    CHECK(std::abs(bp[0] - l[0] * d) < 1e-9);
    CHECK(std::abs(bp[1] - l[1] * d) < 1e-9);
  }
}

TEST_CASE("project optical axis and behind-camera rejection") {
  const Intrinsics k{120, 130, 60, 45};
  auto uv = project(k, {0, 0, 3.0});
  CHECK(uv[0] == doctest::Approx(60.0));
  CHECK(uv[1] == doctest::Approx(45.0));
  CHECK_THROWS_WITH_AS(project(k, {0.5, 0.5, -1.0}), doctest::Contains("behind-camera"),
                       std::invalid_argument);
}

TEST_CASE("project/backproject round trip under 1e-9 px") {
  Rng rng(23);
  const Intrinsics k{250, 260, 160, 120};
  for (int i = 0; i < 1000; ++i) {
    const double u = rng.uniform(-50, 400), v = rng.uniform(-50, 300);
    const double d = rng.uniform(0.1, 100.0);
    const auto uv = project(k, backproject(k, u, v, d));
    CHECK(std::abs(uv[0] - u) < 1e-9);
    CHECK(std::abs(uv[1] - v) < 1e-9);
  }
}

TEST_CASE("scale_intrinsics halving schedule and composition") {
  const Intrinsics k{320, 330, 160, 120};
  const Intrinsics k0 = scale_intrinsics(k, 0);
  CHECK(k0.fx == k.fx);
  CHECK(k0.cy == k.cy);
  const Intrinsics k1 = scale_intrinsics(k, 1);
  CHECK(k1.fx == 160.0);
  CHECK(k1.fy == 165.0);
  CHECK(k1.cx == 80.0);
  CHECK(k1.cy == 60.0);
  const Intrinsics k5 = scale_intrinsics(k, 5);
  CHECK(k5.fx == doctest::Approx(320.0 / 32));
  CHECK(k5.cx == doctest::Approx(160.0 / 32));

  const Intrinsics ka = scale_intrinsics(scale_intrinsics(k, 2), 3);
  const Intrinsics kb = scale_intrinsics(k, 5);
  CHECK(ka.fx == kb.fx);
  CHECK(ka.cx == kb.cx);
}

TEST_CASE("exp_se3: zero vector, pure translation, Rodrigues oracle") {
  const Pose id = exp_se3({0, 0, 0, 0, 0, 0});
  for (int i = 0; i < 9; ++i) CHECK(id.rotation[i] == (i % 4 == 0 ? 1.0 : 0.0));
  for (int i = 0; i < 3; ++i) CHECK(id.translation[i] == 0.0);

  const Pose tx = exp_se3({0, 0, 0, 1, 0, 0});
  CHECK(tx.translation[0] == 1.0);
  CHECK(tx.rotation[0] == 1.0);
  CHECK(tx.rotation[1] == 0.0);

  // term-by-term Rodrigues for w = (0, 0, 0.1)
  const double th = 0.1;
  const Pose rz = exp_se3({0, 0, th, 0, 0, 0});
  const double w[3] = {0, 0, th};
  double wx[9] = {0, -w[2], w[1], w[2], 0, -w[0], -w[1], w[0], 0};
  double wx2[9];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      wx2[3 * i + j] = 0;
      for (int l = 0; l < 3; ++l) wx2[3 * i + j] += wx[3 * i + l] * wx[3 * l + j];
    }
  for (int i = 0; i < 9; ++i) {
    const double expect = (i % 4 == 0 ? 1.0 : 0.0) + std::sin(th) / th * wx[i] +
                          (1 - std::cos(th)) / (th * th) * wx2[i];
    CHECK(std::abs(rz.rotation[i] - expect) < 1e-12);
  }
}

TEST_CASE("pose group laws") {
  Rng rng(24);
  for (int i = 0; i < 50; ++i) {
    std::array<double, 6> v;
    for (double& x : v) x = rng.uniform(-0.8, 0.8);
    const Pose p = exp_se3(v);

    // orthonormality and determinant
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        double dot = 0;
        for (int l = 0; l < 3; ++l) dot += p.rotation[3 * l + r] * p.rotation[3 * l + c];
        CHECK(std::abs(dot - (r == c ? 1.0 : 0.0)) < 1e-9);
      }
    const auto& m = p.rotation;
    const double det = m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
                       m[2] * (m[3] * m[7] - m[4] * m[6]);
    CHECK(std::abs(det - 1.0) < 1e-9);

    const Pose pi = compose(p, inverse(p));
    for (int j = 0; j < 9; ++j) CHECK(std::abs(pi.rotation[j] - (j % 4 == 0 ? 1 : 0)) < 1e-9);
    for (int j = 0; j < 3; ++j) CHECK(std::abs(pi.translation[j]) < 1e-9);
  }

  // associativity
  const Pose a = exp_se3({0.1, -0.2, 0.3, 1, 2, 3});
  const Pose b = exp_se3({-0.3, 0.1, 0.2, -1, 0.5, 2});
  const Pose c = exp_se3({0.2, 0.2, -0.1, 0, -2, 1});
  const Pose ab_c = compose(compose(a, b), c);
  const Pose a_bc = compose(a, compose(b, c));
  for (int i = 0; i < 9; ++i) CHECK(std::abs(ab_c.rotation[i] - a_bc.rotation[i]) < 1e-9);
  for (int i = 0; i < 3; ++i) CHECK(std::abs(ab_c.translation[i] - a_bc.translation[i]) < 1e-9);
}

TEST_CASE("reconstruct with identity pose is the identity map for any depth") {
  Rng rng(25);
  Tape tape;
  const Intrinsics k{40, 40, 15.5, 15.5};
  Tensor img = Tensor::zeros({1, 3, 32, 32});
  for (double& v : img.values()) v = rng.uniform(0.0, 1.0);
  Tensor depth = Tensor::zeros({1, 1, 32, 32});
  for (double& v : depth.values()) v = rng.uniform(0.5, 9.0);  // arbitrary positive depths

  auto rec = reconstruct(tape, img, depth, Pose::identity(), k);
  for (int y = 1; y < 31; ++y)
    for (int x = 1; x < 31; ++x) {
      CHECK(rec.mask.at(0, 0, y, x) == 1.0);
      for (int c = 0; c < 3; ++c) {
        CHECK(std::abs(rec.image.at(0, c, y, x) - img.at(0, c, y, x)) < 1e-9);
      }
    }
}

TEST_CASE("reconstruct of a fronto-parallel plane under x-translation shifts by fx tx / d") {
  // band-limited texture so the analytic shift is exact up to interpolation
  const int h = 32, w = 48;
  const Intrinsics k{50, 50, 23.5, 15.5};
  const double d = 4.0, tx = 0.4;
  const double shift = k.fx * tx / d;  // 5 px

  auto tex = [](double u, double v) {
    return 0.5 + 0.2 * std::sin(0.35 * u + 0.1) + 0.15 * std::cos(0.28 * v - 0.4) +
           0.1 * std::sin(0.2 * (u + v));
  };
  Tensor img_tau = Tensor::zeros({1, 1, h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) img_tau.at(0, 0, y, x) = tex(x, y);
  Tensor depth = Tensor::full({1, 1, h, w}, d);

  Pose g;  // moves frame-t points into the source frame
  g.translation = {tx, 0, 0};
  Tape tape;
  auto rec = reconstruct(tape, img_tau, depth, g, k);

  // fx tx / d = 5 exactly, so sampling lands on the lattice and the
  // reconstruction must match the analytically shifted texture to rounding
  for (int y = 2; y < h - 2; ++y)
    for (int x = 2; x < w - 2; ++x) {
      if (x + shift > w - 1.0) continue;
      CHECK(rec.mask.at(0, 0, y, x) == 1.0);
      const double expect = tex(x + shift, y);
      CHECK(std::abs(rec.image.at(0, 0, y, x) - expect) < 1e-6);
    }

  // the warp coordinates themselves are analytic: u' = x + fx tx / d
  auto wc = warp_coords(tape, depth, pose_to_tensors(g).rotation,
                        pose_to_tensors(g).translation, k);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      CHECK(std::abs(wc.coords.at(0, 0, y, x) - (x + shift)) < 1e-6);
      CHECK(std::abs(wc.coords.at(0, 1, y, x) - y) < 1e-6);
    }
}

TEST_CASE("reconstruct masks nearly everything under a half-turn") {
  Rng rng(26);
  Tape tape;
  // asymmetric principal point: the half-turn maps most of the frame outside
  const Intrinsics k{40, 40, 5.0, 4.0};
  Tensor img = Tensor::zeros({1, 1, 32, 32});
  for (double& v : img.values()) v = rng.uniform(0.0, 1.0);
  Tensor depth = Tensor::full({1, 1, 32, 32}, 3.0);
  const Pose g = exp_se3({0, 0, 3.14159265358979, 0, 0, 0});
  auto rec = reconstruct(tape, img, depth, g, k);
  double valid = 0;
  for (double v : rec.mask.values()) valid += v;
  CHECK(valid < 0.15 * 32 * 32);
}

TEST_CASE("photometric gradient through reconstruct matches finite differences") {
  SynthSpec spec;
  spec.n_frames = 2;
  spec.width = 32;
  spec.height = 32;
  spec.k = Intrinsics{40, 40, 15.5, 15.5};
  spec.motion = MotionProfile::TranslateX;
  spec.seed = 99;
  spec.sparse_density = 0.05;
  auto frames = synth_scene(spec);
  Tensor depth = frames[0].gt.clone();
  // check away from the photometric minimum so gradients dominate FD noise
  Rng drng(4321);
  for (double& v : depth.values()) v *= drng.uniform(0.93, 1.07);
  const Pose g = compose(inverse(*frames[1].pose_to_world), *frames[0].pose_to_world);
  LossWeights w;
  const double err = finite_diff_check(
      [&](Tape& t) {
        auto rec = reconstruct(t, frames[1].image, depth, g, frames[0].k);
        return photometric_loss(t, frames[0].image, {rec}, w);
      },
      depth, {1e-5, 128, 4242});
  CHECK(err < 1e-4);
}

TEST_CASE("calibration file round trip and validation") {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "kbnet_calib_test";
  fs::create_directories(dir);
  {
    std::ofstream out(dir / "calib.txt");
    out << "320.5 321.5 160.0 120.25\n";
    out << "80 81 40 30\n";
  }
  auto cams = read_calibration((dir / "calib.txt").string());
  REQUIRE(cams.size() == 2);
  CHECK(cams[0].fx == 320.5);
  CHECK(cams[1].cy == 30.0);

  {
    std::ofstream out(dir / "bad.txt");
    out << "320 321 160\n";
  }
  CHECK_THROWS(read_calibration((dir / "bad.txt").string()));
  {
    std::ofstream out(dir / "neg.txt");
    out << "-320 321 160 120\n";
  }
  CHECK_THROWS(read_calibration((dir / "neg.txt").string()));
  fs::remove_all(dir);
}

TEST_SUITE_END();
