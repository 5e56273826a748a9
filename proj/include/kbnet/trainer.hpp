#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "kbnet/data_io.hpp"
#include "kbnet/kbnet.hpp"
#include "kbnet/losses.hpp"
#include "kbnet/metrics.hpp"

namespace kbnet {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  void validate() const;
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
  std::int64_t step = 0;
};

// Bias-corrected Adam update, applied elementwise to every parameter from
// its accumulated gradient. Rejects non-finite gradients by parameter name.
void adam_step(const std::vector<std::pair<std::string, Tensor>>& params, AdamState& state,
               double lr, const AdamConfig& cfg);

struct LrStage {
  int from_epoch = 0;
  int to_epoch = 0;  // exclusive
  double lr = 1e-4;
};

enum class PoseSource { GroundTruth, PoseNet };

struct TrainConfig {
  int batch_size = 8;
  int crop_h = 0, crop_w = 0;  // 0 disables cropping
  LossWeights weights;
  std::vector<LrStage> schedule{{0, 10, 1e-4}, {10, 15, 5e-5}};
  AdamConfig adam;
  AugmentConfig augment;
  std::uint64_t seed = 1;
  int epochs = 15;
  PoseSource pose_source = PoseSource::GroundTruth;
  int val_tail = 0;  // how many trailing frames are held out for validation
  DepthCap cap{0.2, 5.0};

  void validate() const;
  double lr_at(int epoch) const;
};

struct TrainResult {
  std::vector<double> epoch_mean_loss;
  std::vector<EvalResult> epoch_val;  // empty when no held-out frames have gt
};

// Unsupervised training over consecutive frame triples: forward the network
// on the middle frame, reconstruct it from both neighbors, minimize the
// combined loss. Writes per-epoch checkpoints and an append-only CSV log
// under out_dir (pass "" to keep everything in memory).
TrainResult train(const std::vector<Frame>& frames, ModelParams& params,
                  const NetworkConfig& net_cfg, const TrainConfig& cfg,
                  const std::string& out_dir);

// Inference on one frame.
Tensor infer_depth(const Frame& frame, const ModelParams& params, const NetworkConfig& cfg);
Tensor infer_depth(const Frame& frame, const Intrinsics& k_override, const ModelParams& params,
                   const NetworkConfig& cfg);

// Evaluates over all frames carrying ground truth.
EvalResult evaluate_frames(const std::vector<Frame>& frames, const ModelParams& params,
                           const NetworkConfig& cfg, DepthCap cap);

// Calibration-sensitivity sweep: each perturbation scales one intrinsic
// parameter ("f" scales both focal lengths) by (1 + delta) at input time,
// weights fixed. Emits CSV (and a plot PNG) under out_dir when non-empty.
struct Perturbation {
  std::string param;  // "f", "cx", or "cy"
  double delta = 0.0;
};
std::vector<std::pair<Perturbation, EvalResult>> sensitivity_sweep(
    const std::vector<Frame>& frames, const ModelParams& params, const NetworkConfig& cfg,
    const std::vector<Perturbation>& perturbations, DepthCap cap, const std::string& out_dir);

// Density sweep: resamples each frame's sparse input from ground truth at the
// requested densities (seeded) and evaluates.
std::vector<std::pair<double, EvalResult>> density_sweep(const std::vector<Frame>& frames,
                                                         const ModelParams& params,
                                                         const NetworkConfig& cfg,
                                                         const std::vector<double>& densities,
                                                         DepthCap cap, std::uint64_t seed,
                                                         const std::string& out_dir);

}  // namespace kbnet
