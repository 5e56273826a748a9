// Acceptance suite: runs every criterion end to end and prints one PASS/FAIL
// line each. Exit code is the number of failed criteria.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "kbnet/camera.hpp"
#include "kbnet/checkpoint.hpp"
#include "kbnet/config.hpp"
#include "kbnet/data_io.hpp"
#include "kbnet/gradcheck.hpp"
#include "kbnet/losses.hpp"
#include "kbnet/metrics.hpp"
#include "kbnet/random.hpp"
#include "kbnet/trainer.hpp"

using namespace kbnet;
namespace fs = std::filesystem;

namespace {

int g_failures = 0;

double now_s() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void criterion(int number, const std::string& name, bool ok, const std::string& detail) {
  std::printf("[%s] criterion %d: %s (%s)\n", ok ? "PASS" : "FAIL", number, name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// ---------------------------------------------------------------- criterion 1
void run_geometry_suite() {
  const double t0 = now_s();
  bool ok = true;
  std::string detail;

  Rng rng(1001);
  const Intrinsics k{260.5, 258.0, 161.75, 119.25};
  double worst = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double u = rng.uniform(-50, 700);
    const double v = rng.uniform(-50, 500);
    const double d = rng.uniform(0.100001, 100.0);
    const auto uv = project(k, backproject(k, u, v, d));
    worst = std::max({worst, std::abs(uv[0] - u), std::abs(uv[1] - v)});
  }
  if (worst >= 1e-9) {
    ok = false;
    detail += "round-trip error " + fmt(worst) + "; ";
  }

  {
    Rng rr(1002);
    Tape tape;
    const Intrinsics kk{80, 80, 47.5, 31.5};
    Tensor img = Tensor::zeros({1, 3, 64, 96});
    for (double& v : img.values()) v = rr.uniform(0.0, 1.0);
    Tensor depth = Tensor::zeros({1, 1, 64, 96});
    for (double& v : depth.values()) v = rr.uniform(0.4, 9.0);
    auto rec = reconstruct(tape, img, depth, Pose::identity(), kk);
    double err = 0.0;
    for (int c = 0; c < 3; ++c)
      for (int y = 1; y < 63; ++y)
        for (int x = 1; x < 95; ++x)
          err = std::max(err, std::abs(rec.image.at(0, c, y, x) - img.at(0, c, y, x)));
    if (err >= 1e-6) {
      ok = false;
      detail += "identity-warp error " + fmt(err) + "; ";
    }
  }

  {
    // fronto-parallel plane, fx tx / d = 5 px exactly
    const int h = 64, w = 96;
    const Intrinsics kk{50, 50, 47.5, 31.5};
    const double d = 4.0, tx = 0.4;
    auto tex = [](double u, double v) {
      return 0.5 + 0.2 * std::sin(0.21 * u + 0.3) + 0.15 * std::cos(0.17 * v - 0.8) +
             0.1 * std::sin(0.11 * (u + v));
    };
    Tensor img = Tensor::zeros({1, 1, h, w});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) img.at(0, 0, y, x) = tex(x, y);
    Tensor depth = Tensor::full({1, 1, h, w}, d);
    Pose g;
    g.translation = {tx, 0, 0};
    Tape tape;
    auto rec = reconstruct(tape, img, depth, g, kk);
    const double shift = kk.fx * tx / d;
    double err = 0.0;
    for (int y = 1; y < h - 1; ++y)
      for (int x = 1; x < w - 1; ++x) {
        if (x + shift > w - 1.0) continue;
        err = std::max(err, std::abs(rec.image.at(0, 0, y, x) - tex(x + shift, y)));
      }
    if (err >= 1e-6) {
      ok = false;
      detail += "plane-warp error " + fmt(err) + "; ";
    }
  }

  const double dt = now_s() - t0;
  if (dt >= 10.0) ok = false;
  criterion(1, "geometry oracle suite", ok, detail + "runtime " + fmt(dt) + "s");
}

// ---------------------------------------------------------------- criterion 2
Tensor pool_oracle(const Tensor& z, int k, bool is_min) {
  const Shape4 s = z.shape();
  Tensor out = Tensor::zeros(s);
  const int r = k / 2;
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      double best = is_min ? std::numeric_limits<double>::infinity()
                           : -std::numeric_limits<double>::infinity();
      bool found = false;
      for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= s.h || xx < 0 || xx >= s.w) continue;
          const double v = z.at(0, 0, yy, xx);
          if (is_min && v <= 0.0) continue;
          if (is_min ? v < best : v > best) {
            best = v;
            found = true;
          }
        }
      out.at(0, 0, y, x) = found ? best : 0.0;
    }
  return out;
}

void run_pooling_suite() {
  const double t0 = now_s();
  bool ok = true;
  std::string detail;
  Rng rng(2001);
  int mismatches = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int h = rng.uniform_int(6, 20);
    const int w = rng.uniform_int(6, 20);
    Tensor g = Tensor::zeros({1, 1, h, w});
    for (double& v : g.values()) {
      if (rng.uniform01() < 0.05) v = rng.uniform(0.5, 9.5);
    }
    SparseDepthMap z{g};
    for (int k : {3, 5, 7}) {
      Tensor mn = masked_min_pool(z, k).grid;
      Tensor mx = masked_max_pool(z, k).grid;
      Tensor mn_ref = pool_oracle(g, k, true);
      Tensor mx_ref = pool_oracle(g, k, false);
      for (std::int64_t i = 0; i < g.numel(); ++i) {
        if (mn.data()[i] != mn_ref.data()[i]) ++mismatches;
        if (mx.data()[i] != mx_ref.data()[i]) ++mismatches;
      }
    }
  }
  if (mismatches > 0) {
    ok = false;
    detail = std::to_string(mismatches) + " mismatches; ";
  }
  const double dt = now_s() - t0;
  if (dt >= 10.0) ok = false;
  criterion(2, "pooling oracle suite", ok, detail + "200 grids x {3,5,7} exact, runtime " +
                                               fmt(dt) + "s");
}

// ---------------------------------------------------------------- criterion 3
void run_gradient_suite() {
  const double t0 = now_s();
  bool ok = true;
  std::string worst_name = "-";
  double worst_margin = 0.0;
  int failed = 0;
  for (const GradCheckCase& c : gradcheck_suite()) {
    const double err = c.run();
    if (!(err < c.tol)) {
      ++failed;
      ok = false;
      worst_name = c.name;
    }
    if (err / c.tol > worst_margin) {
      worst_margin = err / c.tol;
      if (err < c.tol) worst_name = c.name;
    }
  }
  const double dt = now_s() - t0;
  if (dt >= 300.0) ok = false;
  criterion(3, "gradient suite vs central finite differences", ok,
            std::to_string(failed) + " failures, tightest case " + worst_name + " at " +
                fmt(worst_margin) + " of tolerance, runtime " + fmt(dt) + "s");
}

// ---------------------------------------------------------------- criterion 4
void run_loss_closed_forms() {
  bool ok = true;
  std::string detail;

  {
    Rng rng(4001);
    Tape tape;
    const Intrinsics k{40, 40, 15.5, 15.5};
    Tensor img = Tensor::zeros({1, 3, 32, 32});
    for (double& v : img.values()) v = rng.uniform(0.0, 1.0);
    Tensor depth = Tensor::full({1, 1, 32, 32}, 3.0);
    auto rec = reconstruct(tape, img, depth, Pose::identity(), k);
    LossWeights w;
    const double ph = photometric_loss(tape, img, {rec, rec}, w).item();
    if (std::abs(ph) > 1e-12) {
      ok = false;
      detail += "identity-warp photometric " + fmt(ph) + "; ";
    }
  }
  {
    const double alpha = 0.32, beta = 0.57;
    Tape tape;
    Tensor a = Tensor::full({1, 1, 8, 10}, alpha);
    Tensor b = Tensor::full({1, 1, 8, 10}, beta);
    Tensor s = ssim(tape, a, b);
    const double expect = (2 * alpha * beta + 1e-4) / (alpha * alpha + beta * beta + 1e-4);
    double err = 0;
    for (double v : s.values()) err = std::max(err, std::abs(v - expect));
    if (err >= 1e-12) {
      ok = false;
      detail += "ssim closed form err " + fmt(err) + "; ";
    }
  }
  {
    Tape tape;
    const int h = 8, w = 12;
    const double slope = 0.4;
    Tensor img = Tensor::full({1, 3, h, w}, 0.7);
    Tensor ramp = Tensor::zeros({1, 1, h, w});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) ramp.at(0, 0, y, x) = slope * x;
    const double got = smoothness_loss(tape, ramp, img).item();
    const double expect = h * (w - 1) * slope / static_cast<double>(h * w);
    if (got != expect) {
      // forward differences of an exact ramp are bit-exact here
      if (std::abs(got - expect) > 1e-15) {
        ok = false;
        detail += "smoothness ramp " + fmt(got) + " vs " + fmt(expect) + "; ";
      }
    }
  }
  {
    Tape tape;
    LossWeights w{1.0, 0.15, 0.95, 0.6, 0.04};
    const double total =
        total_loss(tape, Tensor::scalar(2.0), Tensor::scalar(3.0), Tensor::scalar(5.0), w).item();
    if (total != 4.0) {
      ok = false;
      detail += "weighted combination " + fmt(total) + " != 4.0; ";
    }
  }
  criterion(4, "loss closed forms", ok, detail.empty() ? "all exact" : detail);
}

// ---------------------------------------------------------------- criterion 5
void run_metrics_criterion() {
  bool ok = true;
  std::string detail;

  Tensor gt = Tensor::from_data({1, 1, 1, 2}, {1.0, 2.0});
  Tensor pred = Tensor::from_data({1, 1, 1, 2}, {1.1, 2.2});
  EvalResult r = evaluate(pred, gt, {0.2, 5.0});
  const double mae_e = 150.0;
  const double rmse_e = 1000.0 * std::sqrt(0.025);
  const double ie1 = 1.0 / 1.1 - 1.0, ie2 = 1.0 / 2.2 - 0.5;
  const double imae_e = 1000.0 * (std::abs(ie1) + std::abs(ie2)) / 2.0;
  const double irmse_e = 1000.0 * std::sqrt((ie1 * ie1 + ie2 * ie2) / 2.0);
  auto rel = [](double a, double b) { return std::abs(a - b) / std::abs(b); };
  if (rel(r.mae_mm, mae_e) > 1e-6 || rel(r.rmse_mm, rmse_e) > 1e-6 ||
      rel(r.imae_per_km, imae_e) > 1e-6 || rel(r.irmse_per_km, irmse_e) > 1e-6) {
    ok = false;
    detail += "worked example: " + r.csv_line() + "; ";
  }

  Rng rng(5001);
  for (int trial = 0; trial < 20 && ok; ++trial) {
    Tensor g2 = Tensor::zeros({1, 1, 10, 10});
    Tensor p2 = Tensor::zeros({1, 1, 10, 10});
    for (int i = 0; i < 100; ++i) {
      g2.data()[i] = rng.uniform(0.5, 4.5);
      p2.data()[i] = g2.data()[i] + rng.uniform(-0.3, 0.3);
    }
    const double s = rng.uniform(1.2, 3.0);
    Tensor gs = Tensor::zeros({1, 1, 10, 10});
    Tensor ps = Tensor::zeros({1, 1, 10, 10});
    for (int i = 0; i < 100; ++i) {
      gs.data()[i] = s * g2.data()[i];
      ps.data()[i] = s * p2.data()[i];
    }
    EvalResult a = evaluate(p2, g2, {0.2, 5.0});
    EvalResult b = evaluate(ps, gs, {0.2 * s, 5.0 * s});
    if (rel(b.mae_mm, s * a.mae_mm) > 1e-9 || rel(b.imae_per_km, a.imae_per_km / s) > 1e-9) {
      ok = false;
      detail += "scale invariance violated; ";
    }
    // restriction: out-of-cap and invalid pixels never matter
    Tensor g3 = g2.clone();
    Tensor p3 = p2.clone();
    g3.data()[7] = 0.0;
    g3.data()[13] = 77.0;
    p3.data()[7] = 1e9;
    p3.data()[13] = -5.0;
    EvalResult c = evaluate(p3, g3, {0.2, 5.0});
    MetricAccumulator acc({0.2, 5.0});
    Tensor g4 = g2.clone();
    g4.data()[7] = 0.0;
    g4.data()[13] = 77.0;
    acc.add(p2, g4);
    EvalResult d = acc.result();
    if (c.mae_mm != d.mae_mm || c.irmse_per_km != d.irmse_per_km) {
      ok = false;
      detail += "restriction invariance violated; ";
    }
    if (c.rmse_mm < c.mae_mm || c.irmse_per_km < c.imae_per_km) {
      ok = false;
      detail += "power-mean inequality violated; ";
    }
  }
  criterion(5, "metrics worked example and invariances", ok,
            detail.empty() ? "within 1e-6 relative" : detail);
}

// -------------------------------------------------------- criteria 6 through 10
Tensor nearest_fill(const SparseDepthMap& z) {
  const Shape4 s = z.grid.shape();
  struct Pt {
    int x, y;
    double v;
  };
  std::vector<Pt> pts;
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      const double v = z.grid.at(0, 0, y, x);
      if (v > 0.0) pts.push_back({x, y, v});
    }
  Tensor out = Tensor::zeros(s);
  if (pts.empty()) return out;
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x) {
      long best = std::numeric_limits<long>::max();
      double bv = 0.0;
      for (const Pt& p : pts) {
        const long d2 = static_cast<long>(p.x - x) * (p.x - x) +
                        static_cast<long>(p.y - y) * (p.y - y);
        if (d2 < best) {
          best = d2;
          bv = p.v;
        }
      }
      out.at(0, 0, y, x) = bv;
    }
  return out;
}

struct TrainedModel {
  std::vector<Frame> frames;
  std::vector<Frame> val;
  NetworkConfig net;
  TrainConfig cfg;
  ModelParams params;
  TrainResult result;
  double baseline_mae = 0.0;
  double runtime_s = 0.0;
};

TrainedModel train_synthetic(std::uint64_t seed, int n_frames, int epochs,
                             const std::string& out_dir) {
  TrainedModel tm;
  SynthSpec spec;
  spec.n_frames = n_frames;
  spec.width = 96;
  spec.height = 64;
  spec.k = Intrinsics{80.0, 80.0, 47.5, 31.5};
  spec.motion = MotionProfile::Mixed;
  spec.seed = 7;
  spec.sparse_density = 0.005;
  tm.frames = synth_scene(spec);

  RunConfig rc = default_run_config("synthetic");
  tm.net = rc.network;
  tm.cfg = rc.train;
  tm.cfg.seed = seed;
  tm.cfg.epochs = epochs;
  tm.cfg.schedule = {{0, (epochs * 7) / 10, 3e-4}, {(epochs * 7) / 10, epochs, 1e-4}};
  tm.cfg.val_tail = n_frames / 5;
  tm.val.assign(tm.frames.end() - tm.cfg.val_tail, tm.frames.end());

  MetricAccumulator base(tm.cfg.cap);
  for (const Frame& f : tm.val) base.add(nearest_fill(f.sparse), f.gt);
  tm.baseline_mae = base.result().mae_mm;

  tm.params = init_model_params(tm.net, tm.cfg.seed, false);
  const double t0 = now_s();
  tm.result = train(tm.frames, tm.params, tm.net, tm.cfg, out_dir);
  tm.runtime_s = now_s() - t0;
  return tm;
}

void run_training_criteria(const fs::path& work) {
  // ------------------------------------------------------------ criterion 6
  TrainedModel tm = train_synthetic(11, 200, 10, (work / "train_main").string());
  const double trained_mae = tm.result.epoch_val.back().mae_mm;
  const double reduction = 1.0 - trained_mae / tm.baseline_mae;
  const bool c6 = reduction >= 0.20 && tm.runtime_s < 1800.0;
  criterion(6, "desk-scale training beats densify-only baseline by >= 20%", c6,
            "baseline " + fmt(tm.baseline_mae) + "mm, trained " + fmt(trained_mae) +
                "mm, reduction " + fmt(100 * reduction) + "%, runtime " + fmt(tm.runtime_s) +
                "s");

  // ------------------------------------------------------------ criterion 8
  {
    const std::vector<Perturbation> perts = {{"f", -0.25}, {"f", -0.10}, {"f", 0.0},
                                             {"cx", -0.10}, {"cx", 0.10}, {"cy", -0.10},
                                             {"cy", 0.10}};
    auto rows = sensitivity_sweep(tm.val, tm.params, tm.net, perts, tm.cfg.cap,
                                  (work / "sweep_calib").string());
    const double f25 = rows[0].second.mae_mm;
    const double f10 = rows[1].second.mae_mm;
    const double base = rows[2].second.mae_mm;
    double pp_worst = 0.0;
    for (int i = 3; i < 7; ++i) {
      pp_worst = std::max(pp_worst, std::abs(rows[static_cast<std::size_t>(i)].second.mae_mm - base) / base);
    }
    const bool c8 = f25 > f10 && pp_worst <= 0.10;
    criterion(8, "calibration sensitivity trend", c8,
              "mae f-25% " + fmt(f25) + " > f-10% " + fmt(f10) + ", principal-point drift " +
                  fmt(100 * pp_worst) + "% of baseline " + fmt(base));
  }

  // ------------------------------------------------------------ criterion 9
  {
    auto rows = density_sweep(tm.val, tm.params, tm.net, {0.005, 0.0015, 0.0005}, tm.cfg.cap, 17,
                              (work / "sweep_density").string());
    const double m50 = rows[0].second.mae_mm;
    const double m15 = rows[1].second.mae_mm;
    const double m05 = rows[2].second.mae_mm;
    const bool c9 = m15 >= m50 && m05 >= m15;
    criterion(9, "error non-decreasing as density drops", c9,
              "mae 0.5% " + fmt(m50) + " <= 0.15% " + fmt(m15) + " <= 0.05% " + fmt(m05));
  }

  // ------------------------------------------------------------ criterion 7
  {
    bool c7 = true;
    std::string detail;
    for (std::uint64_t seed : {21, 22, 23}) {
      SynthSpec test_spec;
      test_spec.n_frames = 24;
      test_spec.width = 96;
      test_spec.height = 64;
      test_spec.k = Intrinsics{96.0, 96.0, 47.5, 31.5};  // focal +20%
      test_spec.motion = MotionProfile::Mixed;
      test_spec.seed = 1007 + seed;
      test_spec.sparse_density = 0.005;
      auto test_frames = synth_scene(test_spec);

      TrainedModel m = train_synthetic(seed, 120, 6, "");
      MetricAccumulator with_true(m.cfg.cap), with_wrong(m.cfg.cap);
      const Intrinsics k_train{80.0, 80.0, 47.5, 31.5};
      for (const Frame& f : test_frames) {
        with_true.add(infer_depth(f, f.k, m.params, m.net), f.gt);
        with_wrong.add(infer_depth(f, k_train, m.params, m.net), f.gt);
      }
      const double mae_true = with_true.result().mae_mm;
      const double mae_wrong = with_wrong.result().mae_mm;
      detail += "seed " + std::to_string(seed) + ": true-K " + fmt(mae_true) + " vs train-K " +
                fmt(mae_wrong) + "; ";
      if (!(mae_true < mae_wrong)) c7 = false;
    }
    criterion(7, "feeding the true test calibration lowers error (3 seeds)", c7, detail);
  }

  // ------------------------------------------------------------ criterion 10
  {
    const auto runA = (work / "repro_a").string();
    const auto runB = (work / "repro_b").string();
    SynthSpec spec;
    spec.n_frames = 30;
    spec.width = 96;
    spec.height = 64;
    spec.k = Intrinsics{80.0, 80.0, 47.5, 31.5};
    spec.motion = MotionProfile::Mixed;
    spec.seed = 7;
    spec.sparse_density = 0.005;
    auto frames = synth_scene(spec);

    RunConfig rc = default_run_config("synthetic");
    TrainConfig cfg = rc.train;
    cfg.epochs = 2;
    cfg.schedule = {{0, 2, 3e-4}};
    cfg.val_tail = 6;
    cfg.seed = 33;

    ModelParams pa = init_model_params(rc.network, cfg.seed, false);
    ModelParams pb = init_model_params(rc.network, cfg.seed, false);
    TrainResult ra = train(frames, pa, rc.network, cfg, runA);
    TrainResult rb = train(frames, pb, rc.network, cfg, runB);

    std::ifstream fa(fs::path(runA) / "ckpt_final.kbn", std::ios::binary);
    std::ifstream fb(fs::path(runB) / "ckpt_final.kbn", std::ios::binary);
    std::ostringstream sa, sb;
    sa << fa.rdbuf();
    sb << fb.rdbuf();
    const bool bytes_equal = sa.str() == sb.str() && !sa.str().empty();
    bool metrics_equal = ra.epoch_val.size() == rb.epoch_val.size();
    for (std::size_t i = 0; metrics_equal && i < ra.epoch_val.size(); ++i) {
      metrics_equal = ra.epoch_val[i].mae_mm == rb.epoch_val[i].mae_mm &&
                      ra.epoch_val[i].rmse_mm == rb.epoch_val[i].rmse_mm &&
                      ra.epoch_val[i].imae_per_km == rb.epoch_val[i].imae_per_km &&
                      ra.epoch_val[i].irmse_per_km == rb.epoch_val[i].irmse_per_km;
    }
    criterion(10, "identical seeds give bit-identical checkpoints and metrics",
              bytes_equal && metrics_equal,
              std::string("checkpoint bytes ") + (bytes_equal ? "equal" : "differ") +
                  ", metrics " + (metrics_equal ? "equal" : "differ"));
  }
}

}  // namespace

int main() {
  const fs::path work = fs::temp_directory_path() / "kbnet_acceptance";
  fs::remove_all(work);
  fs::create_directories(work);

  run_geometry_suite();
  run_pooling_suite();
  run_gradient_suite();
  run_loss_closed_forms();
  run_metrics_criterion();
  run_training_criteria(work);

  std::printf("%d criterion(s) failed\n", g_failures);
  return g_failures;
}
