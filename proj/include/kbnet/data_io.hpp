#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kbnet/camera.hpp"
#include "kbnet/s2d.hpp"
#include "kbnet/tensor.hpp"

namespace kbnet {

// One training/evaluation sample. Depth grids use the 0-means-invalid
// convention throughout.
struct Frame {
  Tensor image;           // (1, 3, h, w), values in [0, 1]
  SparseDepthMap sparse;  // (1, 1, h, w)
  Tensor gt;              // (1, 1, h, w); undefined tensor when absent
  Intrinsics k;
  std::optional<Pose> pose_to_world;  // camera-to-world
  int index = 0;
};

// 16-bit grayscale PNG depth maps: meters = stored / 256, stored 0 invalid.
Tensor read_depth_png(const std::string& path);
void write_depth_png(const Tensor& depth, const std::string& path);

// 8-bit RGB PNGs mapped to [0, 1] by /255.
Tensor read_rgb_png(const std::string& path);
void write_rgb_png(const Tensor& image, const std::string& path);

enum class SampleStrategy { UniformRandom, Grid };

// Selects floor(density * |valid pixels|) valid pixels of a dense map and
// zeroes the rest. Seeded-deterministic.
SparseDepthMap subsample_sparse(const Tensor& dense, double density, SampleStrategy strategy,
                                std::uint64_t seed);

struct AugmentConfig {
  double removal_lo = 0.0;
  double removal_hi = 0.0;
  int h_shift_max = 0;
  double apply_probability = 0.5;  // per augmentation
};

struct FrameTriple {
  Frame prev, curr, next;
};

// Seeded augmentation of a frame triple: sparse-point removal and joint
// integer horizontal shifts. Shifts move image, sparse and gt depth
// identically (replicated image columns, invalidated depth columns) and
// adjust the principal point so the warp geometry stays exact.
FrameTriple augment(const FrameTriple& triple, const AugmentConfig& cfg, std::uint64_t seed);

enum class MotionProfile { Static, TranslateX, Mixed };

struct SynthSpec {
  int n_frames = 200;
  int width = 96;   // divisible by 32
  int height = 64;  // divisible by 32
  Intrinsics k{80.0, 80.0, 47.5, 31.5};
  MotionProfile motion = MotionProfile::Mixed;
  std::uint64_t seed = 7;
  double sparse_density = 0.005;
};

// Renders textured planes and slanted quads at known depths under a smooth
// trajectory by exact ray casting, so ground-truth depth, pose and intrinsics
// are mutually consistent to interpolation error.
std::vector<Frame> synth_scene(const SynthSpec& spec);

// synth_scene plus the per-pixel surface id of each frame, used to build
// strict co-visibility masks in self-consistency checks.
struct SynthScene {
  std::vector<Frame> frames;
  std::vector<std::vector<std::int32_t>> surface_ids;  // h*w per frame
};
SynthScene synth_scene_full(const SynthSpec& spec);

// Dataset directory layout: images/, sparse/, gt/ PNG files plus calib.txt,
// poses.txt (12 floats per line, row-major R then t) and manifest.txt with
// lines "image_path depth_path [gt_path] calib_line_index".
void write_dataset(const std::vector<Frame>& frames, const std::string& dir);
std::vector<Frame> load_dataset(const std::string& manifest_path);

}  // namespace kbnet
