#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "kbnet/checkpoint.hpp"
#include "kbnet/config.hpp"
#include "kbnet/data_io.hpp"
#include "kbnet/gradcheck.hpp"
#include "kbnet/metrics.hpp"
#include "kbnet/trainer.hpp"

namespace fs = std::filesystem;
using namespace kbnet;

namespace {

RunConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return default_run_config("synthetic");
  return load_run_config(path);
}

ModelParams load_model(const RunConfig& cfg, const std::string& checkpoint, bool with_pose) {
  ModelParams params = init_model_params(cfg.network, cfg.train.seed, with_pose);
  load_model_params(params, checkpoint);
  return params;
}

int cmd_synth(const RunConfig& cfg, const std::string& out_dir) {
  const std::vector<Frame> frames = synth_scene(cfg.synth);
  write_dataset(frames, out_dir);
  std::cout << "wrote " << frames.size() << " frames to " << out_dir << "\n";
  return 0;
}

int cmd_train(RunConfig cfg, const std::string& out_dir) {
  if (cfg.manifest.empty()) {
    throw std::invalid_argument("config key 'dataset.manifest': required for train");
  }
  std::vector<Frame> frames = load_dataset(cfg.manifest);
  ModelParams params = init_model_params(cfg.network, cfg.train.seed,
                                         cfg.train.pose_source == PoseSource::PoseNet);
  TrainResult result = train(frames, params, cfg.network, cfg.train, out_dir);
  for (std::size_t e = 0; e < result.epoch_mean_loss.size(); ++e) {
    std::cout << "epoch " << e << " mean_loss " << result.epoch_mean_loss[e];
    if (e < result.epoch_val.size()) std::cout << " val_mae_mm " << result.epoch_val[e].mae_mm;
    std::cout << "\n";
  }
  std::cout << "final checkpoint: " << (fs::path(out_dir) / "ckpt_final.kbn").string() << "\n";
  return 0;
}

int cmd_infer(const RunConfig& cfg, const std::string& image_path, const std::string& sparse_path,
              const std::string& calib_path, const std::string& checkpoint,
              const std::string& out_dir) {
  Frame f;
  f.image = read_rgb_png(image_path);
  f.sparse = SparseDepthMap::from_tensor(read_depth_png(sparse_path));
  f.k = read_calibration(calib_path).front();
  ModelParams params = load_model(cfg, checkpoint, /*with_pose=*/false);
  Tensor depth = infer_depth(f, params, cfg.network);
  fs::create_directories(out_dir);
  const std::string out_path =
      (fs::path(out_dir) / (fs::path(image_path).stem().string() + "_depth.png")).string();
  write_depth_png(depth, out_path);
  std::cout << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& pred_dir, const std::string& gt_dir, double cap_min,
             double cap_max, const std::string& out_dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(pred_dir)) {
    if (e.path().extension() == ".png") names.push_back(e.path().filename().string());
  }
  std::sort(names.begin(), names.end());
  if (names.empty()) throw std::runtime_error("no PNG predictions in " + pred_dir);
  MetricAccumulator acc(DepthCap{cap_min, cap_max});
  for (const std::string& n : names) {
    const fs::path gt_path = fs::path(gt_dir) / n;
    if (!fs::exists(gt_path)) {
      throw std::runtime_error("missing ground truth for " + n + " in " + gt_dir);
    }
    acc.add(read_depth_png((fs::path(pred_dir) / n).string()), read_depth_png(gt_path.string()));
  }
  const EvalResult r = acc.result();
  std::cout << r.csv_line() << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream csv(fs::path(out_dir) / "metrics.csv");
    csv << "mae_mm,rmse_mm,imae_per_km,irmse_per_km,n_pixels\n" << r.csv_line() << "\n";
  }
  return 0;
}

int cmd_sweep_calib(const RunConfig& cfg, const std::string& checkpoint,
                    const std::vector<double>& deltas, const std::string& out_dir) {
  if (cfg.manifest.empty()) {
    throw std::invalid_argument("config key 'dataset.manifest': required for sweep-calib");
  }
  std::vector<Frame> frames = load_dataset(cfg.manifest);
  ModelParams params = load_model(cfg, checkpoint, false);
  std::vector<Perturbation> perts;
  for (double d : deltas) perts.push_back({"f", d});
  for (double d : deltas) perts.push_back({"cx", d});
  for (double d : deltas) perts.push_back({"cy", d});
  const auto rows =
      sensitivity_sweep(frames, params, cfg.network, perts, cfg.train.cap, out_dir);
  for (const auto& [p, r] : rows) {
    std::cout << p.param << "," << p.delta << "," << r.csv_line() << "\n";
  }
  return 0;
}

int cmd_sweep_density(const RunConfig& cfg, const std::string& checkpoint,
                      const std::vector<double>& densities, const std::string& out_dir) {
  if (cfg.manifest.empty()) {
    throw std::invalid_argument("config key 'dataset.manifest': required for sweep-density");
  }
  std::vector<Frame> frames = load_dataset(cfg.manifest);
  ModelParams params = load_model(cfg, checkpoint, false);
  const auto rows = density_sweep(frames, params, cfg.network, densities, cfg.train.cap,
                                  cfg.train.seed, out_dir);
  for (const auto& [d, r] : rows) {
    std::cout << d << "," << r.csv_line() << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"kbnet: unsupervised depth completion with calibrated backprojection"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out";
  std::uint64_t seed = 0;
  bool seed_set = false;
  app.add_option("--config", config_path, "JSON run configuration")->capture_default_str();
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  app.add_option_function<std::uint64_t>(
         "--seed", [&](std::uint64_t s) { seed = s; seed_set = true; }, "seed override");

  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  int synth_frames = 0;
  synth->add_option("--frames", synth_frames, "number of frames (override)");

  auto* train_cmd = app.add_subcommand("train", "train on a dataset manifest");
  std::string data_manifest;
  train_cmd->add_option("--data", data_manifest, "dataset manifest (overrides config)");

  auto* infer = app.add_subcommand("infer", "image + sparse depth + calib -> depth PNG");
  std::string image_path, sparse_path, calib_path, checkpoint;
  infer->add_option("--image", image_path, "RGB PNG")->required();
  infer->add_option("--sparse", sparse_path, "16-bit sparse depth PNG")->required();
  infer->add_option("--calib", calib_path, "calibration file")->required();
  infer->add_option("--checkpoint", checkpoint, "model checkpoint")->required();

  auto* eval_cmd = app.add_subcommand("eval", "predictions vs ground truth -> metrics CSV");
  std::string pred_dir, gt_dir;
  std::vector<double> cap{0.2, 5.0};
  eval_cmd->add_option("--pred", pred_dir, "prediction directory")->required();
  eval_cmd->add_option("--gt", gt_dir, "ground-truth directory")->required();
  eval_cmd->add_option("--cap", cap, "depth cap: min max")->expected(2);

  auto* sweep_calib = app.add_subcommand("sweep-calib", "calibration sensitivity sweep");
  std::string sc_checkpoint;
  std::vector<double> deltas{-0.25, -0.10, 0.0, 0.10, 0.25};
  sweep_calib->add_option("--checkpoint", sc_checkpoint, "model checkpoint")->required();
  sweep_calib->add_option("--data", data_manifest, "dataset manifest (overrides config)");
  sweep_calib->add_option("--deltas", deltas, "fractional perturbations");

  auto* sweep_density = app.add_subcommand("sweep-density", "input density sweep");
  std::string sd_checkpoint;
  std::vector<double> densities{0.005, 0.0015, 0.0005};
  sweep_density->add_option("--checkpoint", sd_checkpoint, "model checkpoint")->required();
  sweep_density->add_option("--data", data_manifest, "dataset manifest (overrides config)");
  sweep_density->add_option("--densities", densities, "densities to evaluate");

  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient suite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {  // --help
      std::cout << app.help();
      return 0;
    }
    std::cerr << e.what() << "\n\n" << app.help();
    return 1;
  }

  try {
    RunConfig cfg = load_config_or_default(config_path);
    if (seed_set) {
      cfg.train.seed = seed;
      cfg.synth.seed = seed;
    }
    if (!data_manifest.empty()) cfg.manifest = data_manifest;
    cfg.output_dir = out_dir;

    if (synth->parsed()) {
      if (synth_frames > 0) cfg.synth.n_frames = synth_frames;
      return cmd_synth(cfg, out_dir);
    }
    if (train_cmd->parsed()) return cmd_train(cfg, out_dir);
    if (infer->parsed()) return cmd_infer(cfg, image_path, sparse_path, calib_path, checkpoint, out_dir);
    if (eval_cmd->parsed()) return cmd_eval(pred_dir, gt_dir, cap[0], cap[1], out_dir);
    if (sweep_calib->parsed()) return cmd_sweep_calib(cfg, sc_checkpoint, deltas, out_dir);
    if (sweep_density->parsed()) return cmd_sweep_density(cfg, sd_checkpoint, densities, out_dir);
    if (gradcheck->parsed()) return run_gradcheck_suite() == 0 ? 0 : 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
