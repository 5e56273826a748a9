#include <cmath>
#include <cstdio>
#include <memory>

#include "kbnet/camera.hpp"
#include "kbnet/data_io.hpp"
#include "kbnet/gradcheck.hpp"
#include "kbnet/kbnet.hpp"
#include "kbnet/losses.hpp"
#include "kbnet/random.hpp"
#include "kbnet/s2d.hpp"

namespace kbnet {

namespace {

Tensor random_tensor(Shape4 s, Rng& rng, double lo, double hi) {
  Tensor t = Tensor::zeros(s);
  for (double& v : t.values()) v = rng.uniform(lo, hi);
  return t;
}

// Strictly positive, pairwise well-separated values: safe for pooling and
// L1 finite differences.
Tensor tiefree_tensor(Shape4 s, Rng& rng) {
  Tensor t = Tensor::zeros(s);
  double base = 0.5;
  for (double& v : t.values()) {
    base += 0.013;
    v = base + rng.uniform(0.0, 0.005);
  }
  return t;
}

// Random projection to a scalar so every output coordinate contributes with
// a distinct weight.
Tensor project_scalar(Tape& tape, const Tensor& t, std::uint64_t seed) {
  Rng rng(seed);
  Tensor w = random_tensor(t.shape(), rng, -1.0, 1.0);
  return ops::sum(tape, ops::mul(tape, t, w));
}

// Shared tiny scene + model for the end-to-end checks.
struct FullLossEnv {
  std::vector<Frame> frames;
  NetworkConfig cfg;
  ModelParams params;
  LossWeights weights;

  FullLossEnv() {
    SynthSpec spec;
    spec.n_frames = 3;
    spec.width = 32;
    spec.height = 32;
    spec.k = Intrinsics{40.0, 40.0, 15.5, 15.5};
    spec.motion = MotionProfile::Mixed;
    spec.seed = 424242;
    spec.sparse_density = 0.02;
    frames = synth_scene(spec);

    cfg = NetworkConfig::compact(0.1, 8.0);
    cfg.s2d.min_kernels = {3, 5};
    cfg.s2d.max_kernels = {7};
    cfg.depth_channels = {4, 6, 8, 10, 12};
    cfg.fused_channels = {6, 8, 12, 16, 20};
    cfg.depth_out = 12;
    cfg.fused_out = 20;
    cfg.decoder_channels = {16, 12, 10, 8, 8};
    cfg.pose_channels = {4, 6, 8, 10, 12};
    params = init_model_params(cfg, 31337, /*with_pose=*/true);
    weights = LossWeights{1.0, 0.15, 0.95, 2.0, 0.5};
  }

  Tensor loss(Tape& tape) const {
    const Frame& prev = frames[0];
    const Frame& curr = frames[1];
    const Frame& next = frames[2];
    Tensor dhat = kbnet_forward(tape, curr.image, curr.sparse, curr.k, params, cfg);
    std::vector<Reconstruction> recons;
    for (const Frame* tau : {&prev, &next}) {
      Se3Tensors g = pose_net_forward(tape, curr.image, tau->image, *params.pose);
      recons.push_back(reconstruct(tape, tau->image, dhat, g, curr.k));
    }
    Tensor ph = photometric_loss(tape, curr.image, recons, weights);
    Tensor sz = sparse_consistency_loss(tape, dhat, curr.sparse);
    Tensor sm = smoothness_loss(tape, dhat, curr.image);
    return total_loss(tape, ph, sz, sm, weights);
  }
};

const FullLossEnv& full_loss_env() {
  static FullLossEnv env;
  return env;
}

}  // namespace

std::vector<GradCheckCase> gradcheck_suite() {
  std::vector<GradCheckCase> cases;
  auto add = [&](const std::string& name, double tol, std::function<double()> fn) {
    cases.push_back({name, tol, std::move(fn)});
  };

  add("conv2d/input", 1e-6, [] {
    Rng rng(11);
    Tensor x = random_tensor({2, 3, 6, 7}, rng, -1, 1);
    Tensor w = random_tensor({4, 3, 3, 3}, rng, -1, 1);
    Tensor b = random_tensor({1, 4, 1, 1}, rng, -1, 1);
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ops::conv2d(t, x, w, b, 1, 1), 1); }, x);
  });
  add("conv2d/weight_stride2", 1e-6, [] {
    Rng rng(12);
    Tensor x = random_tensor({1, 3, 8, 8}, rng, -1, 1);
    Tensor w = random_tensor({4, 3, 3, 3}, rng, -1, 1);
    Tensor b = random_tensor({1, 4, 1, 1}, rng, -1, 1);
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ops::conv2d(t, x, w, b, 2, 1), 2); }, w);
  });
  add("conv2d/bias", 1e-6, [] {
    Rng rng(13);
    Tensor x = random_tensor({1, 2, 5, 5}, rng, -1, 1);
    Tensor w = random_tensor({3, 2, 1, 1}, rng, -1, 1);
    Tensor b = random_tensor({1, 3, 1, 1}, rng, -1, 1);
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ops::conv2d(t, x, w, b, 1, 0), 3); }, b);
  });
  add("bilinear_sample/image", 1e-6, [] {
    Rng rng(14);
    Tensor img = random_tensor({1, 3, 9, 9}, rng, 0, 1);
    Tensor coords = Tensor::zeros({1, 2, 4, 4});
    for (int i = 0; i < 16; ++i) {
      coords.data()[i] = rng.uniform(0.3, 7.7);
      coords.data()[16 + i] = rng.uniform(0.3, 7.7);
    }
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ops::bilinear_sample(t, img, coords).values, 4); },
        img);
  });
  add("bilinear_sample/coords", 1e-6, [] {
    Rng rng(15);
    Tensor img = random_tensor({1, 2, 9, 9}, rng, 0, 1);
    Tensor coords = Tensor::zeros({1, 2, 4, 4});
    for (int i = 0; i < 16; ++i) {
      coords.data()[i] = rng.uniform_int(1, 7) + rng.uniform(0.25, 0.75);
      coords.data()[16 + i] = rng.uniform_int(1, 7) + rng.uniform(0.25, 0.75);
    }
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ops::bilinear_sample(t, img, coords).values, 5); },
        coords);
  });

  struct Unary {
    const char* name;
    Tensor (*fn)(Tape&, const Tensor&);
    double lo, hi;
  };
  const Unary unaries[] = {
      {"abs", [](Tape& t, const Tensor& a) { return ops::abs(t, a); }, 0.2, 1.5},
      {"square", [](Tape& t, const Tensor& a) { return ops::square(t, a); }, -1.5, 1.5},
      {"exp", [](Tape& t, const Tensor& a) { return ops::exp(t, a); }, -1.0, 1.0},
      {"sqrt", [](Tape& t, const Tensor& a) { return ops::sqrt(t, a); }, 0.3, 2.0},
      {"sigmoid", [](Tape& t, const Tensor& a) { return ops::sigmoid(t, a); }, -2.0, 2.0},
      {"box_filter3", [](Tape& t, const Tensor& a) { return ops::box_filter3(t, a); }, -1, 1},
      {"grad_x", [](Tape& t, const Tensor& a) { return ops::grad_x(t, a); }, -1, 1},
      {"grad_y", [](Tape& t, const Tensor& a) { return ops::grad_y(t, a); }, -1, 1},
      {"channel_mean", [](Tape& t, const Tensor& a) { return ops::channel_mean(t, a); }, -1, 1},
      {"spatial_mean", [](Tape& t, const Tensor& a) { return ops::spatial_mean(t, a); }, -1, 1},
      {"mean", [](Tape& t, const Tensor& a) { return ops::mean(t, a); }, -1, 1},
      {"upsample_nearest2",
       [](Tape& t, const Tensor& a) { return ops::upsample_nearest2(t, a); },
       -1,
       1},
      {"avg_pool2", [](Tape& t, const Tensor& a) { return ops::avg_pool2(t, a); }, -1, 1},
  };
  int seed = 100;
  for (const Unary& u : unaries) {
    const int s = seed++;
    add(std::string("op/") + u.name, 1e-6, [u, s] {
      Rng rng(static_cast<std::uint64_t>(s));
      Tensor x = random_tensor({2, 3, 4, 6}, rng, u.lo, u.hi);
      auto fn = u.fn;
      return finite_diff_check(
          [&](Tape& t) { return project_scalar(t, fn(t, x), static_cast<std::uint64_t>(s)); }, x);
    });
  }
  add("op/leaky_relu", 1e-6, [] {
    Rng rng(130);
    Tensor x = random_tensor({2, 3, 4, 6}, rng, 0.2, 1.5);
    for (std::int64_t i = 0; i < x.numel(); i += 2) x.data()[i] *= -1.0;  // both branches
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ops::leaky_relu(t, x, 0.1), 130); }, x);
  });
  add("op/add_broadcast", 1e-6, [] {
    Rng rng(131);
    Tensor a = random_tensor({2, 1, 4, 6}, rng, -1, 1);
    Tensor b = random_tensor({1, 3, 4, 6}, rng, -1, 1);
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ops::add(t, a, b), 131); }, a);
  });
  add("op/mul_broadcast", 1e-6, [] {
    Rng rng(132);
    Tensor a = random_tensor({2, 1, 4, 6}, rng, -1, 1);
    Tensor b = random_tensor({1, 3, 4, 6}, rng, -1, 1);
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ops::mul(t, a, b), 132); }, b);
  });
  add("op/sub", 1e-6, [] {
    Rng rng(133);
    Tensor a = random_tensor({1, 2, 4, 6}, rng, -1, 1);
    Tensor b = random_tensor({1, 2, 4, 6}, rng, -1, 1);
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ops::sub(t, a, b), 133); }, b);
  });
  add("op/div", 1e-6, [] {
    Rng rng(134);
    Tensor a = random_tensor({1, 2, 4, 6}, rng, -1, 1);
    Tensor b = random_tensor({1, 2, 4, 6}, rng, 0.5, 2.0);
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ops::div(t, a, b), 134); }, b);
  });
  add("op/concat_slice", 1e-6, [] {
    Rng rng(135);
    Tensor a = random_tensor({1, 2, 4, 6}, rng, -1, 1);
    Tensor b = random_tensor({1, 3, 4, 6}, rng, -1, 1);
    return finite_diff_check(
        [&](Tape& t) {
          Tensor cat = ops::concat_channels(t, {a, b});
          return project_scalar(t, ops::slice_channels(t, cat, 1, 4), 135);
        },
        b);
  });
  add("op/masked_min_pool", 1e-6, [] {
    Rng rng(136);
    Tensor x = tiefree_tensor({1, 2, 7, 8}, rng);
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ops::masked_min_pool(t, x, 3), 136); }, x);
  });
  add("op/masked_max_pool", 1e-6, [] {
    Rng rng(137);
    Tensor x = tiefree_tensor({1, 2, 7, 8}, rng);
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ops::masked_max_pool(t, x, 5), 137); }, x);
  });

  add("camera/se3_exp", 1e-6, [] {
    Rng rng(140);
    Tensor v = random_tensor({2, 6, 1, 1}, rng, -0.4, 0.4);
    return finite_diff_check(
        [&](Tape& t) {
          Se3Tensors g = se3_exp(t, v);
          return ops::add(t, project_scalar(t, g.rotation, 140),
                          project_scalar(t, g.translation, 141));
        },
        v);
  });
  add("camera/se3_exp_near_zero", 1e-6, [] {
    Rng rng(141);
    Tensor v = random_tensor({1, 6, 1, 1}, rng, -1e-3, 1e-3);
    return finite_diff_check(
        [&](Tape& t) {
          Se3Tensors g = se3_exp(t, v);
          return ops::add(t, project_scalar(t, g.rotation, 142),
                          project_scalar(t, g.translation, 143));
        },
        v);
  });
  add("camera/warp_coords_depth", 1e-5, [] {
    Rng rng(142);
    const Intrinsics k{30.0, 30.0, 7.5, 7.5};
    Tensor depth = random_tensor({1, 1, 16, 16}, rng, 2.5, 3.5);
    Pose pose = exp_se3({0.01, -0.01, 0.005, 0.02, 0.01, -0.02});
    Se3Tensors g = pose_to_tensors(pose);
    return finite_diff_check(
        [&](Tape& t) {
          WarpCoords wc = warp_coords(t, depth, g.rotation, g.translation, k);
          return project_scalar(t, wc.coords, 144);
        },
        depth);
  });
  add("camera/warp_coords_pose", 1e-5, [] {
    Rng rng(143);
    const Intrinsics k{30.0, 30.0, 7.5, 7.5};
    Tensor depth = random_tensor({1, 1, 16, 16}, rng, 2.5, 3.5);
    Tensor v = Tensor::from_data({1, 6, 1, 1}, {0.01, -0.008, 0.006, 0.02, 0.015, -0.01});
    return finite_diff_check(
        [&](Tape& t) {
          Se3Tensors g = se3_exp(t, v);
          WarpCoords wc = warp_coords(t, depth, g.rotation, g.translation, k);
          return project_scalar(t, wc.coords, 145);
        },
        v);
  });
  add("camera/reconstruct_photometric_depth", 1e-4, [] {
    SynthSpec spec;
    spec.n_frames = 2;
    spec.width = 32;
    spec.height = 32;
    spec.k = Intrinsics{40.0, 40.0, 15.5, 15.5};
    spec.motion = MotionProfile::TranslateX;
    spec.seed = 555;
    spec.sparse_density = 0.05;
    auto frames = synth_scene(spec);
    Tensor depth = frames[0].gt.clone();
    // check away from the photometric minimum so gradients dominate FD noise
    Rng drng(4321);
    for (double& v : depth.values()) v *= drng.uniform(0.93, 1.07);
    const Pose g = compose(inverse(*frames[1].pose_to_world), *frames[0].pose_to_world);
    LossWeights w;
    return finite_diff_check(
        [&](Tape& t) {
          Reconstruction rec = reconstruct(t, frames[1].image, depth, g, frames[0].k);
          return photometric_loss(t, frames[0].image, {rec}, w);
        },
        depth, {1e-5, 96, 777});
  });

  add("loss/ssim_a", 1e-6, [] {
    Rng rng(150);
    Tensor a = random_tensor({1, 3, 6, 6}, rng, 0.1, 0.9);
    Tensor b = random_tensor({1, 3, 6, 6}, rng, 0.1, 0.9);
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ssim(t, a, b), 150); }, a);
  });
  add("loss/ssim_b", 1e-6, [] {
    Rng rng(151);
    Tensor a = random_tensor({1, 3, 6, 6}, rng, 0.1, 0.9);
    Tensor b = random_tensor({1, 3, 6, 6}, rng, 0.1, 0.9);
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, ssim(t, a, b), 151); }, b);
  });
  add("loss/photometric_recon", 1e-5, [] {
    Rng rng(152);
    Tensor target = random_tensor({1, 3, 8, 8}, rng, 0.1, 0.9);
    Tensor recon = random_tensor({1, 3, 8, 8}, rng, 0.1, 0.9);
    Tensor mask = Tensor::full({1, 1, 8, 8}, 1.0);
    mask.data()[5] = 0.0;
    LossWeights w;
    return finite_diff_check(
        [&](Tape& t) { return photometric_loss(t, target, {{recon, mask}}, w); }, recon);
  });
  add("loss/sparse_consistency", 1e-6, [] {
    Rng rng(153);
    Tensor dhat = random_tensor({1, 1, 8, 8}, rng, 2.0, 4.0);
    Tensor zg = Tensor::zeros({1, 1, 8, 8});
    for (int i = 0; i < 12; ++i) {
      zg.data()[rng.uniform_int(0, 63)] = rng.uniform(1.0, 1.8);  // residuals stay off zero
    }
    SparseDepthMap z{zg};
    return finite_diff_check(
        [&](Tape& t) { return sparse_consistency_loss(t, dhat, z); }, dhat);
  });
  add("loss/smoothness_dhat", 1e-5, [] {
    Rng rng(154);
    Tensor img = random_tensor({1, 3, 8, 8}, rng, 0.1, 0.9);
    Tensor dhat = tiefree_tensor({1, 1, 8, 8}, rng);
    return finite_diff_check(
        [&](Tape& t) { return smoothness_loss(t, dhat, img); }, dhat);
  });
  add("loss/smoothness_image", 1e-5, [] {
    Rng rng(155);
    Tensor img = tiefree_tensor({1, 3, 8, 8}, rng);
    Tensor dhat = tiefree_tensor({1, 1, 8, 8}, rng);
    return finite_diff_check(
        [&](Tape& t) { return smoothness_loss(t, dhat, img); }, img);
  });

  add("s2d/input", 1e-5, [] {
    Rng rng(160);
    S2DConfig cfg;
    cfg.min_kernels = {3, 5};
    cfg.max_kernels = {7};
    cfg.mid_channels = 4;
    cfg.out_channels = 6;
    Rng prng(161);
    S2DParams params = init_s2d_params(cfg, prng);
    Tensor z = tiefree_tensor({1, 1, 10, 10}, rng);
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, s2d_forward(t, z, params, cfg), 160); }, z);
  });
  add("s2d/fuse_weight", 1e-6, [] {
    Rng rng(162);
    S2DConfig cfg;
    cfg.min_kernels = {3};
    cfg.max_kernels = {5};
    cfg.mid_channels = 4;
    cfg.out_channels = 6;
    Rng prng(163);
    S2DParams params = init_s2d_params(cfg, prng);
    Tensor z = tiefree_tensor({1, 1, 10, 10}, rng);
    return finite_diff_check(
        [&](Tape& t) { return project_scalar(t, s2d_forward(t, z, params, cfg), 162); },
        params.fuse_w);
  });

  add("kbnet/full_loss_wrt_q", 1e-4, [] {
    const FullLossEnv& env = full_loss_env();
    return finite_diff_check([&](Tape& t) { return env.loss(t); }, env.params.layers[0].q,
                             {1e-5, 32, 881});
  });
  add("kbnet/full_loss_wrt_fuse", 1e-4, [] {
    const FullLossEnv& env = full_loss_env();
    return finite_diff_check([&](Tape& t) { return env.loss(t); }, env.params.layers[1].fuse_w,
                             {1e-5, 16, 882});
  });
  add("kbnet/full_loss_wrt_stem", 1e-4, [] {
    const FullLossEnv& env = full_loss_env();
    return finite_diff_check([&](Tape& t) { return env.loss(t); }, env.params.stem_depth_w,
                             {1e-5, 16, 883});
  });
  add("kbnet/full_loss_wrt_decoder", 1e-4, [] {
    const FullLossEnv& env = full_loss_env();
    return finite_diff_check([&](Tape& t) { return env.loss(t); }, env.params.dec_w[2],
                             {1e-5, 16, 884});
  });
  add("kbnet/full_loss_wrt_s2d", 1e-4, [] {
    const FullLossEnv& env = full_loss_env();
    return finite_diff_check([&](Tape& t) { return env.loss(t); }, env.params.s2d.fuse_w,
                             {1e-5, 16, 885});
  });
  add("kbnet/full_loss_wrt_pose_conv", 1e-4, [] {
    const FullLossEnv& env = full_loss_env();
    return finite_diff_check([&](Tape& t) { return env.loss(t); }, env.params.pose->conv_w[0],
                             {1e-5, 16, 886});
  });
  add("kbnet/full_loss_wrt_pose_head", 1e-4, [] {
    const FullLossEnv& env = full_loss_env();
    return finite_diff_check([&](Tape& t) { return env.loss(t); }, env.params.pose->head_w,
                             {1e-5, 16, 887});
  });

  return cases;
}

int run_gradcheck_suite() {
  int failures = 0;
  for (const GradCheckCase& c : gradcheck_suite()) {
    const double err = c.run();
    const bool ok = err < c.tol;
    std::printf("[%s] %-40s max_rel_err=%.3e (tol %.0e)\n", ok ? "PASS" : "FAIL", c.name.c_str(),
                err, c.tol);
    if (!ok) ++failures;
  }
  return failures;
}

}  // namespace kbnet
