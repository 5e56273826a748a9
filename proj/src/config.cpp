#include "kbnet/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

#include "json.hpp"

namespace kbnet {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& key, const std::string& what) {
  throw std::invalid_argument("config key '" + key + "': " + what);
}

void check_keys(const json& j, const std::string& scope, const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      fail(scope.empty() ? it.key() : scope + "." + it.key(), "unknown key");
    }
  }
}

template <class T>
T get_or(const json& j, const std::string& scope, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    fail(scope.empty() ? key : scope + "." + key, "wrong type");
  }
}

std::vector<int> int_list(const json& j, const std::string& scope, const std::string& key,
                          std::vector<int> fallback) {
  return get_or<std::vector<int>>(j, scope, key, std::move(fallback));
}

void parse_s2d(const json& j, S2DConfig& cfg) {
  check_keys(j, "network.s2d", {"min_kernels", "max_kernels", "mid_channels", "out_channels"});
  cfg.min_kernels = int_list(j, "network.s2d", "min_kernels", cfg.min_kernels);
  cfg.max_kernels = int_list(j, "network.s2d", "max_kernels", cfg.max_kernels);
  cfg.mid_channels = get_or(j, "network.s2d", "mid_channels", cfg.mid_channels);
  cfg.out_channels = get_or(j, "network.s2d", "out_channels", cfg.out_channels);
}

void parse_network(const json& j, NetworkConfig& cfg) {
  check_keys(j, "network",
             {"preset", "s2d", "depth_channels", "fused_channels", "depth_out", "fused_out",
              "decoder_channels", "pose_channels", "d_min", "d_max", "d_init"});
  if (j.contains("preset")) {
    const auto p = j.at("preset").get<std::string>();
    if (p == "paper") {
      cfg = NetworkConfig::paper_default();
    } else if (p == "compact") {
      cfg = NetworkConfig::compact(cfg.d_min, cfg.d_max);
    } else {
      fail("network.preset", "expected 'paper' or 'compact', got '" + p + "'");
    }
  }
  if (j.contains("s2d")) parse_s2d(j.at("s2d"), cfg.s2d);
  cfg.depth_channels = int_list(j, "network", "depth_channels", cfg.depth_channels);
  cfg.fused_channels = int_list(j, "network", "fused_channels", cfg.fused_channels);
  cfg.depth_out = get_or(j, "network", "depth_out", cfg.depth_out);
  cfg.fused_out = get_or(j, "network", "fused_out", cfg.fused_out);
  cfg.decoder_channels = int_list(j, "network", "decoder_channels", cfg.decoder_channels);
  cfg.pose_channels = int_list(j, "network", "pose_channels", cfg.pose_channels);
  cfg.d_min = get_or(j, "network", "d_min", cfg.d_min);
  cfg.d_max = get_or(j, "network", "d_max", cfg.d_max);
  cfg.d_init = get_or(j, "network", "d_init", cfg.d_init);
}

void parse_train(const json& j, TrainConfig& cfg) {
  check_keys(j, "train",
             {"batch_size", "crop", "loss_weights", "lr_schedule", "adam", "augment", "seed",
              "epochs", "pose_source", "val_tail", "cap"});
  cfg.batch_size = get_or(j, "train", "batch_size", cfg.batch_size);
  if (j.contains("crop")) {
    const auto crop = j.at("crop").get<std::vector<int>>();
    if (crop.size() != 2) fail("train.crop", "expected [height, width]");
    cfg.crop_h = crop[0];
    cfg.crop_w = crop[1];
  }
  if (j.contains("loss_weights")) {
    const json& w = j.at("loss_weights");
    check_keys(w, "train.loss_weights", {"w_ph", "w_co", "w_st", "w_sz", "w_sm"});
    cfg.weights.w_ph = get_or(w, "train.loss_weights", "w_ph", cfg.weights.w_ph);
    cfg.weights.w_co = get_or(w, "train.loss_weights", "w_co", cfg.weights.w_co);
    cfg.weights.w_st = get_or(w, "train.loss_weights", "w_st", cfg.weights.w_st);
    cfg.weights.w_sz = get_or(w, "train.loss_weights", "w_sz", cfg.weights.w_sz);
    cfg.weights.w_sm = get_or(w, "train.loss_weights", "w_sm", cfg.weights.w_sm);
  }
  if (j.contains("lr_schedule")) {
    cfg.schedule.clear();
    for (const json& s : j.at("lr_schedule")) {
      check_keys(s, "train.lr_schedule[]", {"from", "to", "lr"});
      LrStage stage;
      stage.from_epoch = get_or(s, "train.lr_schedule[].from", "from", -1);
      stage.to_epoch = get_or(s, "train.lr_schedule[].to", "to", -1);
      stage.lr = get_or(s, "train.lr_schedule[].lr", "lr", 0.0);
      cfg.schedule.push_back(stage);
    }
  }
  if (j.contains("adam")) {
    const json& a = j.at("adam");
    check_keys(a, "train.adam", {"beta1", "beta2", "eps"});
    cfg.adam.beta1 = get_or(a, "train.adam", "beta1", cfg.adam.beta1);
    cfg.adam.beta2 = get_or(a, "train.adam", "beta2", cfg.adam.beta2);
    cfg.adam.eps = get_or(a, "train.adam", "eps", cfg.adam.eps);
  }
  if (j.contains("augment")) {
    const json& a = j.at("augment");
    check_keys(a, "train.augment", {"removal_range", "h_shift_max", "apply_probability"});
    if (a.contains("removal_range")) {
      const auto r = a.at("removal_range").get<std::vector<double>>();
      if (r.size() != 2) fail("train.augment.removal_range", "expected [lo, hi]");
      cfg.augment.removal_lo = r[0];
      cfg.augment.removal_hi = r[1];
    }
    cfg.augment.h_shift_max = get_or(a, "train.augment", "h_shift_max", cfg.augment.h_shift_max);
    cfg.augment.apply_probability =
        get_or(a, "train.augment", "apply_probability", cfg.augment.apply_probability);
  }
  cfg.seed = get_or<std::uint64_t>(j, "train", "seed", cfg.seed);
  cfg.epochs = get_or(j, "train", "epochs", cfg.epochs);
  if (j.contains("pose_source")) {
    const auto p = j.at("pose_source").get<std::string>();
    if (p == "gt") {
      cfg.pose_source = PoseSource::GroundTruth;
    } else if (p == "pose-net") {
      cfg.pose_source = PoseSource::PoseNet;
    } else {
      fail("train.pose_source", "expected 'gt' or 'pose-net', got '" + p + "'");
    }
  }
  cfg.val_tail = get_or(j, "train", "val_tail", cfg.val_tail);
  if (j.contains("cap")) {
    const auto c = j.at("cap").get<std::vector<double>>();
    if (c.size() != 2) fail("train.cap", "expected [min_m, max_m]");
    cfg.cap.min_m = c[0];
    cfg.cap.max_m = c[1];
  }
}

void parse_synth(const json& j, SynthSpec& cfg) {
  check_keys(j, "synth",
             {"frames", "width", "height", "fx", "fy", "cx", "cy", "motion", "seed", "density"});
  cfg.n_frames = get_or(j, "synth", "frames", cfg.n_frames);
  cfg.width = get_or(j, "synth", "width", cfg.width);
  cfg.height = get_or(j, "synth", "height", cfg.height);
  cfg.k.fx = get_or(j, "synth", "fx", cfg.k.fx);
  cfg.k.fy = get_or(j, "synth", "fy", cfg.k.fy);
  cfg.k.cx = get_or(j, "synth", "cx", cfg.k.cx);
  cfg.k.cy = get_or(j, "synth", "cy", cfg.k.cy);
  if (j.contains("motion")) {
    const auto m = j.at("motion").get<std::string>();
    if (m == "static") {
      cfg.motion = MotionProfile::Static;
    } else if (m == "translate-x") {
      cfg.motion = MotionProfile::TranslateX;
    } else if (m == "mixed") {
      cfg.motion = MotionProfile::Mixed;
    } else {
      fail("synth.motion", "expected 'static', 'translate-x' or 'mixed', got '" + m + "'");
    }
  }
  cfg.seed = get_or<std::uint64_t>(j, "synth", "seed", cfg.seed);
  cfg.sparse_density = get_or(j, "synth", "density", cfg.sparse_density);
}

}  // namespace

void RunConfig::validate() const {
  network.validate();
  train.validate();
  if (train.cap.min_m <= 0.0 || train.cap.max_m <= train.cap.min_m) {
    fail("train.cap", "require 0 < min < max");
  }
  if (output_dir.empty()) fail("output_dir", "must not be empty");
}

RunConfig default_run_config(const std::string& preset) {
  RunConfig cfg;
  if (preset == "kitti") {
    cfg.network = NetworkConfig::paper_default();
    cfg.train.batch_size = 8;
    cfg.train.crop_h = 320;
    cfg.train.crop_w = 768;
    cfg.train.weights = LossWeights{1.0, 0.15, 0.95, 0.6, 0.04};
    cfg.train.epochs = 60;
    cfg.train.schedule = {{0, 2, 5e-5},    {2, 8, 1e-4},   {8, 20, 1.5e-4},
                          {20, 30, 1e-4},  {30, 45, 5e-5}, {45, 60, 2e-5}};
    cfg.train.augment = AugmentConfig{0.60, 0.70, 16, 0.5};
    cfg.train.cap = DepthCap{0.1, 100.0};
  } else if (preset == "void") {
    cfg.network = NetworkConfig::paper_default();
    cfg.network.s2d.min_kernels = {15, 17};
    cfg.network.s2d.max_kernels = {23, 27, 29};
    cfg.network.d_min = 0.1;
    cfg.network.d_max = 8.0;
    cfg.train.batch_size = 8;
    cfg.train.crop_h = 480;
    cfg.train.crop_w = 640;
    cfg.train.weights = LossWeights{1.0, 0.15, 0.95, 2.0, 2.0};
    cfg.train.epochs = 15;
    cfg.train.schedule = {{0, 10, 1e-4}, {10, 15, 5e-5}};
    cfg.train.augment = AugmentConfig{0.30, 0.60, 0, 0.5};
    cfg.train.cap = DepthCap{0.2, 5.0};
  } else if (preset == "synthetic") {
    cfg.network = NetworkConfig::compact(0.1, 8.0);
    cfg.network.d_init = 3.0;
    cfg.train.batch_size = 1;
    cfg.train.crop_h = 0;
    cfg.train.crop_w = 0;
    cfg.train.weights = LossWeights{1.0, 0.15, 0.95, 2.0, 0.5};
    cfg.train.epochs = 10;
    cfg.train.schedule = {{0, 7, 3e-4}, {7, 10, 1e-4}};
    cfg.train.augment = AugmentConfig{0.30, 0.60, 0, 0.5};
    cfg.train.val_tail = 40;
    cfg.train.cap = DepthCap{0.2, 8.0};
  } else {
    throw std::invalid_argument("unknown preset '" + preset +
                                "' (expected kitti, void, or synthetic)");
  }
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::invalid_argument("config " + path + " is not valid JSON: " + e.what());
  }

  RunConfig cfg;
  check_keys(j, "", {"preset", "output_dir", "dataset", "network", "train", "synth"});
  if (j.contains("preset")) cfg = default_run_config(j.at("preset").get<std::string>());
  cfg.output_dir = get_or(j, "", "output_dir", cfg.output_dir);
  if (j.contains("dataset")) {
    const json& d = j.at("dataset");
    check_keys(d, "dataset", {"manifest"});
    cfg.manifest = get_or<std::string>(d, "dataset", "manifest", cfg.manifest);
  }
  if (j.contains("network")) parse_network(j.at("network"), cfg.network);
  if (j.contains("train")) parse_train(j.at("train"), cfg.train);
  if (j.contains("synth")) parse_synth(j.at("synth"), cfg.synth);
  cfg.validate();
  return cfg;
}

void save_run_config(const RunConfig& cfg, const std::string& path) {
  json j;
  j["output_dir"] = cfg.output_dir;
  if (!cfg.manifest.empty()) j["dataset"]["manifest"] = cfg.manifest;
  json& n = j["network"];
  n["s2d"]["min_kernels"] = cfg.network.s2d.min_kernels;
  n["s2d"]["max_kernels"] = cfg.network.s2d.max_kernels;
  n["s2d"]["mid_channels"] = cfg.network.s2d.mid_channels;
  n["s2d"]["out_channels"] = cfg.network.s2d.out_channels;
  n["depth_channels"] = cfg.network.depth_channels;
  n["fused_channels"] = cfg.network.fused_channels;
  n["depth_out"] = cfg.network.depth_out;
  n["fused_out"] = cfg.network.fused_out;
  n["decoder_channels"] = cfg.network.decoder_channels;
  n["pose_channels"] = cfg.network.pose_channels;
  n["d_min"] = cfg.network.d_min;
  n["d_max"] = cfg.network.d_max;
  n["d_init"] = cfg.network.d_init;
  json& t = j["train"];
  t["batch_size"] = cfg.train.batch_size;
  t["crop"] = {cfg.train.crop_h, cfg.train.crop_w};
  t["loss_weights"] = {{"w_ph", cfg.train.weights.w_ph},
                       {"w_co", cfg.train.weights.w_co},
                       {"w_st", cfg.train.weights.w_st},
                       {"w_sz", cfg.train.weights.w_sz},
                       {"w_sm", cfg.train.weights.w_sm}};
  t["lr_schedule"] = json::array();
  for (const LrStage& s : cfg.train.schedule) {
    t["lr_schedule"].push_back({{"from", s.from_epoch}, {"to", s.to_epoch}, {"lr", s.lr}});
  }
  t["adam"] = {{"beta1", cfg.train.adam.beta1},
               {"beta2", cfg.train.adam.beta2},
               {"eps", cfg.train.adam.eps}};
  t["augment"] = {{"removal_range", {cfg.train.augment.removal_lo, cfg.train.augment.removal_hi}},
                  {"h_shift_max", cfg.train.augment.h_shift_max},
                  {"apply_probability", cfg.train.augment.apply_probability}};
  t["seed"] = cfg.train.seed;
  t["epochs"] = cfg.train.epochs;
  t["pose_source"] = cfg.train.pose_source == PoseSource::GroundTruth ? "gt" : "pose-net";
  t["val_tail"] = cfg.train.val_tail;
  t["cap"] = {cfg.train.cap.min_m, cfg.train.cap.max_m};
  json& s = j["synth"];
  s["frames"] = cfg.synth.n_frames;
  s["width"] = cfg.synth.width;
  s["height"] = cfg.synth.height;
  s["fx"] = cfg.synth.k.fx;
  s["fy"] = cfg.synth.k.fy;
  s["cx"] = cfg.synth.k.cx;
  s["cy"] = cfg.synth.k.cy;
  s["motion"] = cfg.synth.motion == MotionProfile::Static
                    ? "static"
                    : (cfg.synth.motion == MotionProfile::TranslateX ? "translate-x" : "mixed");
  s["seed"] = cfg.synth.seed;
  s["density"] = cfg.synth.sparse_density;

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write config: " + path);
  out << j.dump(2) << "\n";
}

}  // namespace kbnet
