#pragma once

#include <string>

#include "kbnet/data_io.hpp"
#include "kbnet/kbnet.hpp"
#include "kbnet/trainer.hpp"

namespace kbnet {

// Everything a run needs, assembled from a JSON config file. Validation is
// strict: unknown keys are rejected and every failure names the key.
struct RunConfig {
  std::string output_dir = "out";
  std::string manifest;  // dataset manifest path (may be empty for synth)
  NetworkConfig network;
  TrainConfig train;
  SynthSpec synth;

  void validate() const;
};

// Presets: "kitti" (paper-scale defaults), "void" (indoor weights/kernels),
// "synthetic" (compact desk-scale network and schedule).
RunConfig default_run_config(const std::string& preset);

RunConfig load_run_config(const std::string& path);
void save_run_config(const RunConfig& cfg, const std::string& path);

}  // namespace kbnet
