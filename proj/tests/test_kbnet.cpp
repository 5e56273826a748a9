#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "kbnet/checkpoint.hpp"
#include "kbnet/gradcheck.hpp"
#include "kbnet/kbnet.hpp"
#include "kbnet/random.hpp"

using namespace kbnet;

namespace {

Tensor random_tensor(Shape4 s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t = Tensor::zeros(s);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

NetworkConfig tiny_config() {
  NetworkConfig cfg = NetworkConfig::compact(0.1, 8.0);
  cfg.s2d.min_kernels = {3, 5};
  cfg.s2d.max_kernels = {7};
  cfg.s2d.mid_channels = 4;
  cfg.s2d.out_channels = 6;
  cfg.depth_channels = {4, 6, 8, 10, 12};
  cfg.fused_channels = {6, 8, 12, 16, 20};
  cfg.depth_out = 12;
  cfg.fused_out = 20;
  cfg.decoder_channels = {16, 12, 10, 8, 8};
  cfg.pose_channels = {4, 6, 8, 10, 12};
  return cfg;
}

SparseDepthMap random_sparse(int h, int w, double density, Rng& rng) {
  Tensor g = Tensor::zeros({1, 1, h, w});
  for (double& v : g.values()) {
    if (rng.uniform01() < density) v = rng.uniform(0.5, 7.5);
  }
  return SparseDepthMap{g};
}

}  // namespace

TEST_SUITE_BEGIN("kbnet");

TEST_CASE("kb layer: basis compression vector selects channel 0") {
  Rng rng(51);
  const int m = 4, n = 6;
  KBLayerParams p;
  p.q = Tensor::zeros({1, m, 1, 1});
  p.q.data()[0] = 1.0;
  p.depth_w = random_tensor({m, m, 3, 3}, rng);
  p.depth_b = Tensor::zeros({1, m, 1, 1});
  p.image_w = random_tensor({n, n, 3, 3}, rng);
  p.image_b = Tensor::zeros({1, n, 1, 1});
  p.fuse_w = random_tensor({n, n + 3, 1, 1}, rng);
  p.fuse_b = Tensor::zeros({1, n, 1, 1});

  Tensor phi = random_tensor({1, m, 8, 8}, rng, 0.1, 2.0);
  Tensor psi = random_tensor({1, n, 8, 8}, rng);
  const Intrinsics k{1, 1, 0, 0};

  Tape tape;
  Tensor d = ops::conv2d(tape, phi, p.q, Tensor(), 1, 0);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x) CHECK(d.at(0, 0, y, x) == doctest::Approx(phi.at(0, 0, y, x)));
}

TEST_CASE("kb layer positional encoding: constant q^T phi = c, identity K") {
  Rng rng(52);
  const int m = 3, n = 4;
  const double c = 1.7;
  KBLayerParams p;
  p.q = Tensor::zeros({1, m, 1, 1});
  p.q.data()[0] = 1.0;
  p.depth_w = random_tensor({m, m, 3, 3}, rng);
  p.depth_b = Tensor::zeros({1, m, 1, 1});
  p.image_w = random_tensor({n, n, 3, 3}, rng);
  p.image_b = Tensor::zeros({1, n, 1, 1});
  // fusion weights picking out the 3 positional channels (after psi's n)
  p.fuse_w = Tensor::zeros({3, n + 3, 1, 1});
  p.fuse_b = Tensor::full({1, 3, 1, 1}, 0.0);
  for (int i = 0; i < 3; ++i) p.fuse_w.at(i, n + i, 0, 0) = 1.0;

  Tensor phi = Tensor::zeros({1, m, 6, 6});
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) phi.at(0, 0, y, x) = c;
  Tensor psi = random_tensor({1, n, 6, 6}, rng);
  const Intrinsics k{1, 1, 0, 0};

  Tape tape;
  auto out = kb_layer_forward(tape, phi, psi, Tensor(), k, p);
  // fused output channels are leaky_relu(x3d); encode (u c, v c, c) with c > 0
  for (int y = 0; y < 6; ++y)
    for (int x = 0; x < 6; ++x) {
      auto lrelu = [](double v) { return v > 0 ? v : 0.1 * v; };
      CHECK(out.fused.at(0, 0, y, x) == doctest::Approx(lrelu(x * c)).epsilon(1e-12));
      CHECK(out.fused.at(0, 1, y, x) == doctest::Approx(lrelu(y * c)).epsilon(1e-12));
      CHECK(out.fused.at(0, 2, y, x) == doctest::Approx(lrelu(c)).epsilon(1e-12));
    }
}

TEST_CASE("kb layer positional encoding equals camera backproject per pixel") {
  Rng rng(53);
  const int m = 5, n = 4, h = 6, w = 9;
  KBLayerParams p;
  p.q = random_tensor({1, m, 1, 1}, rng);
  p.depth_w = random_tensor({m, m, 3, 3}, rng);
  p.depth_b = Tensor::zeros({1, m, 1, 1});
  p.image_w = random_tensor({n, n, 3, 3}, rng);
  p.image_b = Tensor::zeros({1, n, 1, 1});
  p.fuse_w = random_tensor({n, n + 3, 1, 1}, rng);
  p.fuse_b = Tensor::zeros({1, n, 1, 1});
  Tensor phi = random_tensor({1, m, h, w}, rng, 0.2, 1.5);
  const Intrinsics k{37.0, 41.0, 4.2, 2.9};

  // reproduce the encoding path: d = q^T phi, x3d = rays * d
  Tape tape;
  Tensor d = ops::conv2d(tape, phi, p.q, Tensor(), 1, 0);
  Tensor x3d = ops::mul(tape, d, lift_rays(k, h, w));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double dv = 0;
      for (int c = 0; c < m; ++c) dv += p.q.data()[c] * phi.at(0, c, y, x);
      const auto bp = backproject(k, x, y, dv);
      for (int c = 0; c < 3; ++c) {
        CHECK(std::abs(x3d.at(0, c, y, x) - bp[static_cast<std::size_t>(c)]) < 1e-12);
      }
    }
}

TEST_CASE("encoder: skip resolutions halve, intrinsics scale per level") {
  NetworkConfig cfg = tiny_config();
  ModelParams params = init_model_params(cfg, 7, false);
  Rng rng(54);
  Tensor img = random_tensor({1, 3, 64, 96}, rng, 0, 1);
  SparseDepthMap z = random_sparse(64, 96, 0.02, rng);
  const Intrinsics k{80, 80, 47.5, 31.5};

  Tape tape;
  Tensor dense = s2d_forward(tape, z.grid, params.s2d, cfg.s2d);
  EncoderOut enc = encoder_forward(tape, img, dense, k, params, cfg);
  REQUIRE(enc.skips.size() == 5);
  CHECK(enc.skips[0].shape().h == 64);
  CHECK(enc.skips[0].shape().w == 96);
  CHECK(enc.skips[1].shape().h == 32);
  CHECK(enc.skips[1].shape().w == 48);
  CHECK(enc.skips[2].shape().h == 16);
  CHECK(enc.skips[2].shape().w == 24);
  CHECK(enc.skips[3].shape().h == 8);
  CHECK(enc.skips[3].shape().w == 12);
  CHECK(enc.skips[4].shape().h == 4);
  CHECK(enc.skips[4].shape().w == 6);
  CHECK(enc.bottleneck.shape().h == 2);
  CHECK(enc.bottleneck.shape().w == 3);
  CHECK(enc.bottleneck.shape().c == cfg.depth_out + cfg.fused_out);

  // the level-l intrinsics used by the positional encoding
  for (int l = 0; l < 5; ++l) {
    const Intrinsics kl = scale_intrinsics(k, l);
    const double s = std::pow(2.0, -l);
    CHECK(kl.fx == doctest::Approx(k.fx * s));
    CHECK(kl.cx == doctest::Approx(k.cx * s));
  }

  CHECK_THROWS_WITH_AS(encoder_forward(tape, random_tensor({1, 3, 60, 96}, rng), dense, k, params,
                                       cfg),
                       doctest::Contains("32"), std::invalid_argument);
}

TEST_CASE("encoder forward is deterministic") {
  NetworkConfig cfg = tiny_config();
  ModelParams params = init_model_params(cfg, 9, false);
  Rng rng(55);
  Tensor img = random_tensor({1, 3, 32, 32}, rng, 0, 1);
  SparseDepthMap z = random_sparse(32, 32, 0.05, rng);
  const Intrinsics k{40, 40, 15.5, 15.5};
  Tape t1, t2;
  Tensor a = kbnet_forward(t1, img, z, k, params, cfg);
  Tensor b = kbnet_forward(t2, img, z, k, params, cfg);
  for (std::int64_t i = 0; i < a.numel(); ++i) REQUIRE(a.data()[i] == b.data()[i]);
}

TEST_CASE("decoder output bounded and every skip carries gradient") {
  NetworkConfig cfg = tiny_config();
  ModelParams params = init_model_params(cfg, 11, false);
  Rng rng(56);
  Tensor img = random_tensor({1, 3, 32, 32}, rng, 0, 1);
  SparseDepthMap z = random_sparse(32, 32, 0.05, rng);
  const Intrinsics k{40, 40, 15.5, 15.5};

  Tape tape;
  Tensor dense = s2d_forward(tape, z.grid, params.s2d, cfg.s2d);
  EncoderOut enc = encoder_forward(tape, img, dense, k, params, cfg);
  // make the skips and bottleneck leaf-like grad holders
  enc.bottleneck.set_requires_grad(true);
  for (Tensor& s : enc.skips) s.set_requires_grad(true);
  Tensor dhat = decoder_forward(tape, enc, params, cfg);
  CHECK(dhat.shape() == Shape4{1, 1, 32, 32});
  for (double v : dhat.values()) {
    CHECK(v >= cfg.d_min);
    CHECK(v <= cfg.d_max);
    CHECK(std::isfinite(v));
  }

  Tensor loss = ops::mean(tape, dhat);
  tape.backward(loss);
  auto norm = [](const Tensor& t) {
    double s = 0;
    for (double g : t.grad()) s += g * g;
    return std::sqrt(s);
  };
  CHECK(norm(enc.bottleneck) > 0.0);
  for (Tensor& s : enc.skips) CHECK(norm(s) > 0.0);
}

TEST_CASE("kbnet_forward: positive finite output, calibration is a live input") {
  NetworkConfig cfg = tiny_config();
  ModelParams params = init_model_params(cfg, 13, false);
  Rng rng(57);
  Tensor img = random_tensor({1, 3, 32, 32}, rng, 0, 1);
  SparseDepthMap z = random_sparse(32, 32, 0.05, rng);
  const Intrinsics k{40, 40, 15.5, 15.5};

  Tape tape;
  Tensor d1 = kbnet_forward(tape, img, z, k, params, cfg);
  for (double v : d1.values()) {
    CHECK(v > 0.0);
    CHECK(std::isfinite(v));
  }

  Intrinsics k2 = k;
  k2.fx *= 1.25;
  k2.fy *= 1.25;
  Tensor d2 = kbnet_forward(tape, img, z, k2, params, cfg);
  double max_diff = 0;
  for (std::int64_t i = 0; i < d1.numel(); ++i) {
    max_diff = std::max(max_diff, std::abs(d1.data()[i] - d2.data()[i]));
  }
  CHECK(max_diff > 0.0);
}

TEST_CASE("kbnet_forward works with an empty sparse map") {
  NetworkConfig cfg = tiny_config();
  ModelParams params = init_model_params(cfg, 15, false);
  Rng rng(58);
  Tensor img = random_tensor({1, 3, 32, 32}, rng, 0, 1);
  SparseDepthMap z{Tensor::zeros({1, 1, 32, 32})};
  Tape tape;
  Tensor d = kbnet_forward(tape, img, z, {40, 40, 15.5, 15.5}, params, cfg);
  for (double v : d.values()) {
    CHECK(v > 0.0);
    CHECK(std::isfinite(v));
  }
}

TEST_CASE("pose net: zero head gives the identity pose, rotations orthonormal") {
  NetworkConfig cfg = tiny_config();
  ModelParams params = init_model_params(cfg, 17, true);
  Rng rng(59);
  Tensor a = random_tensor({1, 3, 32, 32}, rng, 0, 1);
  Tensor b = random_tensor({1, 3, 32, 32}, rng, 0, 1);

  {
    PoseNetParams zeroed = *params.pose;
    for (double& v : zeroed.head_w.values()) v = 0.0;
    for (double& v : zeroed.head_b.values()) v = 0.0;
    Tape tape;
    Se3Tensors g = pose_net_forward(tape, a, b, zeroed);
    const Pose p = pose_from_tensors(g);
    for (int i = 0; i < 9; ++i) CHECK(p.rotation[i] == (i % 4 == 0 ? 1.0 : 0.0));
    for (int i = 0; i < 3; ++i) CHECK(p.translation[i] == 0.0);
  }
  {
    Tape tape;
    Se3Tensors g = pose_net_forward(tape, a, b, *params.pose);
    const Pose p = pose_from_tensors(g);
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        double dot = 0;
        for (int l = 0; l < 3; ++l) dot += p.rotation[3 * l + r] * p.rotation[3 * l + c];
        CHECK(std::abs(dot - (r == c ? 1.0 : 0.0)) < 1e-9);
      }
  }
}

TEST_CASE("pose-dependent loss gradients reach pose net weights") {
  NetworkConfig cfg = tiny_config();
  ModelParams params = init_model_params(cfg, 19, true);
  Rng rng(60);
  Tensor a = random_tensor({1, 3, 32, 32}, rng, 0, 1);
  Tensor b = random_tensor({1, 3, 32, 32}, rng, 0, 1);
  Rng prng(61);
  Tensor proj9 = random_tensor({1, 9, 1, 1}, prng);
  Tensor proj3 = random_tensor({1, 3, 1, 1}, prng);

  auto f = [&](Tape& t) {
    Se3Tensors g = pose_net_forward(t, a, b, *params.pose);
    return ops::add(t, ops::sum(t, ops::mul(t, g.rotation, proj9)),
                    ops::sum(t, ops::mul(t, g.translation, proj3)));
  };
  CHECK(finite_diff_check(f, params.pose->head_w, {1e-5, 48, 606}) < 1e-4);
  CHECK(finite_diff_check(f, params.pose->conv_w[0], {1e-5, 48, 607}) < 1e-4);
}

TEST_CASE("default configuration parameter count is 6.9M within 15%") {
  NetworkConfig cfg = NetworkConfig::paper_default();
  ModelParams params = init_model_params(cfg, 1, false);
  const double count = static_cast<double>(params.parameter_count(false));
  MESSAGE("parameter count: ", count);
  CHECK(count > 6.9e6 * 0.85);
  CHECK(count < 6.9e6 * 1.15);
}

TEST_CASE("checkpoint round trip preserves every array bit-exactly") {
  namespace fs = std::filesystem;
  NetworkConfig cfg = tiny_config();
  ModelParams params = init_model_params(cfg, 23, true);
  const fs::path dir = fs::temp_directory_path() / "kbnet_ckpt_test";
  fs::create_directories(dir);
  const std::string path = (dir / "model.kbn").string();
  save_arrays(path, params.named_parameters());

  ModelParams loaded = init_model_params(cfg, 99, true);  // different init
  load_model_params(loaded, path);
  auto a = params.named_parameters();
  auto b = loaded.named_parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    REQUIRE(a[i].second.numel() == b[i].second.numel());
    for (std::int64_t j = 0; j < a[i].second.numel(); ++j) {
      REQUIRE(a[i].second.data()[j] == b[i].second.data()[j]);
    }
  }

  // shape validation
  NetworkConfig other = tiny_config();
  other.fused_channels = {6, 8, 12, 16, 24};
  other.fused_out = 24;
  ModelParams mismatched = init_model_params(other, 1, true);
  CHECK_THROWS_WITH_AS(load_model_params(mismatched, path), doctest::Contains("shape"),
                       std::runtime_error);
  fs::remove_all(dir);
}

TEST_SUITE_END();
