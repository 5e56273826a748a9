#include "kbnet/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "kbnet/checkpoint.hpp"
#include "kbnet/plot.hpp"
#include "kbnet/random.hpp"

namespace fs = std::filesystem;

namespace kbnet {

void AdamConfig::validate() const {
  if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
    throw std::invalid_argument("adam: betas must lie in (0, 1)");
  }
  if (!(eps > 0.0)) throw std::invalid_argument("adam: eps must be > 0");
}

void TrainConfig::validate() const {
  adam.validate();
  weights.validate();
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("train config: epochs must be >= 1");
  if (schedule.empty()) throw std::invalid_argument("train config: empty lr schedule");
  int cursor = 0;
  for (const LrStage& s : schedule) {
    if (s.from_epoch != cursor || s.to_epoch <= s.from_epoch) {
      throw std::invalid_argument(
          "train config: lr schedule stages must be contiguous and non-overlapping from epoch 0");
    }
    if (!(s.lr > 0.0)) throw std::invalid_argument("train config: learning rates must be > 0");
    cursor = s.to_epoch;
  }
  if (cursor < epochs) {
    throw std::invalid_argument("train config: lr schedule must cover all epochs");
  }
  if (val_tail < 0) throw std::invalid_argument("train config: val_tail must be >= 0");
}

double TrainConfig::lr_at(int epoch) const {
  for (const LrStage& s : schedule) {
    if (epoch >= s.from_epoch && epoch < s.to_epoch) return s.lr;
  }
  return schedule.back().lr;
}

void adam_step(const std::vector<std::pair<std::string, Tensor>>& params, AdamState& state,
               double lr, const AdamConfig& cfg) {
  cfg.validate();
  if (state.m.empty()) {
    for (const auto& [name, t] : params) {
      state.m.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
      state.v.emplace_back(static_cast<std::size_t>(t.numel()), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: state does not match parameter list");
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor t = params[p].second;
    const std::vector<double>& g = t.grad();
    double* value = t.data();
    std::vector<double>& m = state.m[p];
    std::vector<double>& v = state.v[p];
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        throw std::runtime_error("training fault: non-finite gradient in parameter '" +
                                 params[p].first + "'");
      }
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      value[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

namespace {

Tensor crop_tensor(const Tensor& t, int x0, int y0, int cw, int ch) {
  const Shape4 s = t.shape();
  Tensor out = Tensor::zeros({s.n, s.c, ch, cw});
  for (int n = 0; n < s.n; ++n)
    for (int c = 0; c < s.c; ++c)
      for (int y = 0; y < ch; ++y)
        for (int x = 0; x < cw; ++x) out.at(n, c, y, x) = t.at(n, c, y0 + y, x0 + x);
  return out;
}

Frame crop_frame(const Frame& f, int x0, int y0, int cw, int ch) {
  Frame out = f;
  out.image = crop_tensor(f.image, x0, y0, cw, ch);
  out.sparse = SparseDepthMap{crop_tensor(f.sparse.grid, x0, y0, cw, ch)};
  if (f.gt.defined()) out.gt = crop_tensor(f.gt, x0, y0, cw, ch);
  out.k.cx -= x0;
  out.k.cy -= y0;
  return out;
}

Pose relative_pose(const Frame& from, const Frame& to) {
  if (!from.pose_to_world.has_value() || !to.pose_to_world.has_value()) {
    throw std::runtime_error("ground-truth pose requested but dataset carries no poses");
  }
  return compose(inverse(*to.pose_to_world), *from.pose_to_world);
}

struct SampleLoss {
  double ph, sz, sm, total;
};

}  // namespace

TrainResult train(const std::vector<Frame>& frames, ModelParams& params,
                  const NetworkConfig& net_cfg, const TrainConfig& cfg,
                  const std::string& out_dir) {
  cfg.validate();
  net_cfg.validate();
  if (cfg.pose_source == PoseSource::PoseNet && !params.pose.has_value()) {
    throw std::invalid_argument("train: pose-net mode requires pose network parameters");
  }
  const int n = static_cast<int>(frames.size());
  const int train_n = n - cfg.val_tail;
  if (train_n < 3) throw std::invalid_argument("train: need at least 3 training frames");

  std::vector<Frame> val_frames(frames.begin() + train_n, frames.end());

  std::ofstream log;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    log.open(fs::path(out_dir) / "train_log.csv", std::ios::trunc);
    log << "epoch,step,loss_ph,loss_sz,loss_sm,loss_total,lr\n";
  }

  auto named = params.named_parameters();
  AdamState adam;
  TrainResult result;
  std::int64_t step = 0;

  std::vector<int> centers;
  for (int t = 1; t + 1 < train_n; ++t) centers.push_back(t);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cfg.lr_at(epoch);

    // deterministic per-epoch shuffle
    std::vector<int> order = centers;
    Rng shuffle_rng(Rng::mix(cfg.seed, 0xE90C0000ULL + static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = shuffle_rng.next_u64() % i;
      std::swap(order[i - 1], order[j]);
    }

    double epoch_loss = 0.0;
    std::int64_t epoch_samples = 0;

    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      const std::size_t b1 = std::min(order.size(), b0 + cfg.batch_size);
      const double inv_batch = 1.0 / static_cast<double>(b1 - b0);
      const std::int64_t batch_index = static_cast<std::int64_t>(b0 / cfg.batch_size);
      params.zero_grad();
      SampleLoss batch_mean{0, 0, 0, 0};

      for (std::size_t bi = b0; bi < b1; ++bi) {
        const int t = order[bi];
        const std::uint64_t sample_seed =
            Rng::mix(cfg.seed, (static_cast<std::uint64_t>(epoch) << 24) ^
                                   static_cast<std::uint64_t>(t));
        FrameTriple triple{frames[static_cast<std::size_t>(t - 1)],
                           frames[static_cast<std::size_t>(t)],
                           frames[static_cast<std::size_t>(t + 1)]};
        triple = augment(triple, cfg.augment, sample_seed);

        if (cfg.crop_h > 0 && cfg.crop_w > 0 &&
            (cfg.crop_h < triple.curr.image.shape().h ||
             cfg.crop_w < triple.curr.image.shape().w)) {
          Rng crop_rng(Rng::mix(sample_seed, 0xC409));
          const int max_x = triple.curr.image.shape().w - cfg.crop_w;
          const int max_y = triple.curr.image.shape().h - cfg.crop_h;
          const int x0 = max_x > 0 ? crop_rng.uniform_int(0, max_x) : 0;
          const int y0 = max_y > 0 ? crop_rng.uniform_int(0, max_y) : 0;
          triple.prev = crop_frame(triple.prev, x0, y0, cfg.crop_w, cfg.crop_h);
          triple.curr = crop_frame(triple.curr, x0, y0, cfg.crop_w, cfg.crop_h);
          triple.next = crop_frame(triple.next, x0, y0, cfg.crop_w, cfg.crop_h);
        }

        Tape tape;
        try {
          Tensor dhat = kbnet_forward(tape, triple.curr.image, triple.curr.sparse, triple.curr.k,
                                      params, net_cfg);
          std::vector<Reconstruction> recons;
          for (const Frame* tau : {&triple.prev, &triple.next}) {
            if (cfg.pose_source == PoseSource::GroundTruth) {
              const Pose g = relative_pose(triple.curr, *tau);
              recons.push_back(reconstruct(tape, tau->image, dhat, g, triple.curr.k));
            } else {
              Se3Tensors g = pose_net_forward(tape, triple.curr.image, tau->image, *params.pose);
              recons.push_back(reconstruct(tape, tau->image, dhat, g, triple.curr.k));
            }
          }
          Tensor ph = photometric_loss(tape, triple.curr.image, recons, cfg.weights);
          Tensor sz = sparse_consistency_loss(tape, dhat, triple.curr.sparse);
          Tensor sm = smoothness_loss(tape, dhat, triple.curr.image);
          Tensor total = total_loss(tape, ph, sz, sm, cfg.weights);
          if (!std::isfinite(total.item())) {
            throw std::runtime_error("training fault: non-finite loss");
          }
          batch_mean.ph += ph.item() * inv_batch;
          batch_mean.sz += sz.item() * inv_batch;
          batch_mean.sm += sm.item() * inv_batch;
          batch_mean.total += total.item() * inv_batch;
          epoch_loss += total.item();
          epoch_samples += 1;

          Tensor scaled = ops::mul_scalar(tape, total, inv_batch);
          tape.backward(scaled);
        } catch (const std::exception& e) {
          throw std::runtime_error(std::string(e.what()) + " (epoch " + std::to_string(epoch) +
                                   ", batch " + std::to_string(batch_index) + ")");
        }
      }

      adam_step(named, adam, lr, cfg.adam);
      step += 1;
      if (log.is_open()) {
        log << epoch << "," << step << "," << batch_mean.ph << "," << batch_mean.sz << ","
            << batch_mean.sm << "," << batch_mean.total << "," << lr << "\n";
      }
    }

    result.epoch_mean_loss.push_back(epoch_loss / static_cast<double>(epoch_samples));

    bool val_has_gt = !val_frames.empty();
    for (const Frame& f : val_frames) val_has_gt = val_has_gt && f.gt.defined();
    if (val_has_gt) {
      result.epoch_val.push_back(evaluate_frames(val_frames, params, net_cfg, cfg.cap));
    }

    if (!out_dir.empty()) {
      std::ostringstream name;
      name << "ckpt_epoch_";
      name.width(3);
      name.fill('0');
      name << epoch << ".kbn";
      auto arrays = params.named_parameters();
      for (std::size_t p = 0; p < named.size(); ++p) {
        const Shape4 s = named[p].second.shape();
        arrays.emplace_back("adam.m." + named[p].first, Tensor::from_data(s, adam.m[p]));
        arrays.emplace_back("adam.v." + named[p].first, Tensor::from_data(s, adam.v[p]));
      }
      arrays.emplace_back("adam.step", Tensor::scalar(static_cast<double>(adam.step)));
      save_arrays((fs::path(out_dir) / name.str()).string(), arrays);
      save_arrays((fs::path(out_dir) / "ckpt_final.kbn").string(), arrays);
    }
  }
  return result;
}

Tensor infer_depth(const Frame& frame, const Intrinsics& k_override, const ModelParams& params,
                   const NetworkConfig& cfg) {
  Tape tape;
  tape.set_enabled(false);
  return kbnet_forward(tape, frame.image, frame.sparse, k_override, params, cfg);
}

Tensor infer_depth(const Frame& frame, const ModelParams& params, const NetworkConfig& cfg) {
  return infer_depth(frame, frame.k, params, cfg);
}

EvalResult evaluate_frames(const std::vector<Frame>& frames, const ModelParams& params,
                           const NetworkConfig& cfg, DepthCap cap) {
  MetricAccumulator acc(cap);
  for (const Frame& f : frames) {
    if (!f.gt.defined()) continue;
    acc.add(infer_depth(f, params, cfg), f.gt);
  }
  return acc.result();
}

std::vector<std::pair<Perturbation, EvalResult>> sensitivity_sweep(
    const std::vector<Frame>& frames, const ModelParams& params, const NetworkConfig& cfg,
    const std::vector<Perturbation>& perturbations, DepthCap cap, const std::string& out_dir) {
  std::vector<std::pair<Perturbation, EvalResult>> rows;
  for (const Perturbation& p : perturbations) {
    MetricAccumulator acc(cap);
    for (const Frame& f : frames) {
      if (!f.gt.defined()) continue;
      Intrinsics k = f.k;
      if (p.param == "f") {
        k.fx *= 1.0 + p.delta;
        k.fy *= 1.0 + p.delta;
      } else if (p.param == "cx") {
        k.cx *= 1.0 + p.delta;
      } else if (p.param == "cy") {
        k.cy *= 1.0 + p.delta;
      } else {
        throw std::invalid_argument("sensitivity_sweep: unknown parameter '" + p.param +
                                    "' (expected f, cx, or cy)");
      }
      acc.add(infer_depth(f, k, params, cfg), f.gt);
    }
    rows.emplace_back(p, acc.result());
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "sweep_calib.csv");
    csv << "param,delta,mae_mm,rmse_mm,imae_per_km,irmse_per_km,n_pixels\n";
    std::vector<double> xs, ys;
    for (const auto& [p, r] : rows) {
      csv << p.param << "," << p.delta << "," << r.csv_line() << "\n";
      xs.push_back(p.delta);
      ys.push_back(r.mae_mm);
    }
    save_line_plot((fs::path(out_dir) / "sweep_calib.png").string(), "delta", "mae_mm", xs, ys);
  }
  return rows;
}

std::vector<std::pair<double, EvalResult>> density_sweep(const std::vector<Frame>& frames,
                                                         const ModelParams& params,
                                                         const NetworkConfig& cfg,
                                                         const std::vector<double>& densities,
                                                         DepthCap cap, std::uint64_t seed,
                                                         const std::string& out_dir) {
  std::vector<std::pair<double, EvalResult>> rows;
  for (std::size_t di = 0; di < densities.size(); ++di) {
    MetricAccumulator acc(cap);
    for (const Frame& f : frames) {
      if (!f.gt.defined()) continue;
      Frame resampled = f;
      resampled.sparse =
          subsample_sparse(f.gt, densities[di], SampleStrategy::UniformRandom,
                           Rng::mix(seed, (di << 20) ^ static_cast<std::uint64_t>(f.index)));
      acc.add(infer_depth(resampled, params, cfg), f.gt);
    }
    rows.emplace_back(densities[di], acc.result());
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "sweep_density.csv");
    csv << "density,mae_mm,rmse_mm,imae_per_km,irmse_per_km,n_pixels\n";
    std::vector<double> xs, ys;
    for (const auto& [d, r] : rows) {
      csv << d << "," << r.csv_line() << "\n";
      xs.push_back(d);
      ys.push_back(r.mae_mm);
    }
    save_line_plot((fs::path(out_dir) / "sweep_density.png").string(), "density", "mae_mm", xs,
                   ys);
  }
  return rows;
}

}  // namespace kbnet
