#include "kbnet/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "kbnet/random.hpp"

namespace fs = std::filesystem;

namespace kbnet {

SparseDepthMap subsample_sparse(const Tensor& dense, double density, SampleStrategy strategy,
                                std::uint64_t seed) {
  if (!(density > 0.0) || density > 1.0) {
    throw std::invalid_argument("subsample_sparse: density must be in (0, 1]");
  }
  const Shape4 s = dense.shape();
  if (s.n != 1 || s.c != 1) {
    throw std::invalid_argument("subsample_sparse expects (1,1,h,w), got " + s.str());
  }
  const double* p = dense.data();
  std::vector<std::int64_t> valid;
  for (std::int64_t i = 0; i < dense.numel(); ++i) {
    if (p[i] > 0.0) valid.push_back(i);
  }
  if (valid.empty()) throw std::runtime_error("subsample_sparse: no valid pixels in dense map");

  const auto target =
      static_cast<std::int64_t>(density * static_cast<double>(valid.size()) + 1e-9);
  Tensor out = Tensor::zeros(s);
  double* o = out.data();

  if (strategy == SampleStrategy::UniformRandom) {
    Rng rng(seed);
    // partial Fisher-Yates over the valid list
    const std::int64_t m = static_cast<std::int64_t>(valid.size());
    for (std::int64_t i = 0; i < target; ++i) {
      const std::int64_t j =
          i + static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(m - i));
      std::swap(valid[i], valid[j]);
      o[valid[i]] = p[valid[i]];
    }
  } else {
    // evenly spaced picks along the row-major valid list
    const double step = static_cast<double>(valid.size()) / static_cast<double>(target);
    for (std::int64_t i = 0; i < target; ++i) {
      const auto idx = static_cast<std::size_t>(static_cast<double>(i) * step);
      o[valid[idx]] = p[valid[idx]];
    }
  }
  return SparseDepthMap::from_tensor(out);
}

namespace {

Tensor shift_image(const Tensor& img, int dx) {
  const Shape4 s = img.shape();
  Tensor out = Tensor::zeros(s);
  const double* p = img.data();
  double* o = out.data();
  for (int c = 0; c < s.c; ++c)
    for (int y = 0; y < s.h; ++y) {
      const double* src = p + (static_cast<std::int64_t>(c) * s.h + y) * s.w;
      double* dst = o + (static_cast<std::int64_t>(c) * s.h + y) * s.w;
      for (int x = 0; x < s.w; ++x) {
        int sx = x + dx;
        if (sx < 0) sx = 0;  // replicate edges
        if (sx > s.w - 1) sx = s.w - 1;
        dst[x] = src[sx];
      }
    }
  return out;
}

Tensor shift_depth(const Tensor& d, int dx) {
  if (!d.defined()) return d;
  const Shape4 s = d.shape();
  Tensor out = Tensor::zeros(s);
  const double* p = d.data();
  double* o = out.data();
  for (int y = 0; y < s.h; ++y) {
    const double* src = p + static_cast<std::int64_t>(y) * s.w;
    double* dst = o + static_cast<std::int64_t>(y) * s.w;
    for (int x = 0; x < s.w; ++x) {
      const int sx = x + dx;
      dst[x] = (sx >= 0 && sx < s.w) ? src[sx] : 0.0;  // vacated columns invalid
    }
  }
  return out;
}

SparseDepthMap remove_points(const SparseDepthMap& z, double fraction, Rng& rng) {
  std::vector<std::int64_t> support;
  const double* p = z.grid.data();
  for (std::int64_t i = 0; i < z.grid.numel(); ++i) {
    if (p[i] > 0.0) support.push_back(i);
  }
  const auto count = static_cast<std::int64_t>(support.size());
  const auto keep = static_cast<std::int64_t>(
      static_cast<double>(count) * (1.0 - fraction) + 1e-9);
  const std::int64_t m = count;
  for (std::int64_t i = 0; i < keep; ++i) {
    const std::int64_t j =
        i + static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(m - i));
    std::swap(support[i], support[j]);
  }
  Tensor out = Tensor::zeros(z.grid.shape());
  double* o = out.data();
  for (std::int64_t i = 0; i < keep; ++i) o[support[i]] = p[support[i]];
  return SparseDepthMap{out};
}

Frame shift_frame(const Frame& f, int dx) {
  Frame out = f;
  out.image = shift_image(f.image, dx);
  out.sparse = SparseDepthMap{shift_depth(f.sparse.grid, dx)};
  out.gt = shift_depth(f.gt, dx);
  out.k.cx -= dx;
  return out;
}

}  // namespace

FrameTriple augment(const FrameTriple& triple, const AugmentConfig& cfg, std::uint64_t seed) {
  if (cfg.removal_lo < 0 || cfg.removal_hi >= 1.0 || cfg.removal_hi < cfg.removal_lo) {
    throw std::invalid_argument("augment: removal fraction range must lie within [0, 1)");
  }
  FrameTriple out = triple;
  Rng rng(Rng::mix(seed, 0xa46));

  if (rng.uniform01() < cfg.apply_probability && cfg.removal_hi > 0.0) {
    const double f = rng.uniform(cfg.removal_lo, cfg.removal_hi);
    Rng r0(Rng::mix(seed, 1));
    Rng r1(Rng::mix(seed, 2));
    Rng r2(Rng::mix(seed, 3));
    out.prev.sparse = remove_points(out.prev.sparse, f, r0);
    out.curr.sparse = remove_points(out.curr.sparse, f, r1);
    out.next.sparse = remove_points(out.next.sparse, f, r2);
  }
  if (rng.uniform01() < cfg.apply_probability && cfg.h_shift_max > 0) {
    const int dx = rng.uniform_int(-cfg.h_shift_max, cfg.h_shift_max);
    if (dx != 0) {
      out.prev = shift_frame(out.prev, dx);
      out.curr = shift_frame(out.curr, dx);
      out.next = shift_frame(out.next, dx);
    }
  }
  return out;
}

namespace {
std::string frame_name(int i) {
  std::ostringstream os;
  os << "frame_";
  os.width(5);
  os.fill('0');
  os << i;
  return os.str();
}
}  // namespace

void write_dataset(const std::vector<Frame>& frames, const std::string& dir) {
  if (frames.empty()) throw std::invalid_argument("write_dataset: no frames");
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "sparse");
  fs::create_directories(fs::path(dir) / "gt");

  std::ofstream calib(fs::path(dir) / "calib.txt");
  std::ofstream poses(fs::path(dir) / "poses.txt");
  std::ofstream manifest(fs::path(dir) / "manifest.txt");
  calib.precision(17);
  poses.precision(17);
  const Intrinsics& k = frames[0].k;
  calib << k.fx << " " << k.fy << " " << k.cx << " " << k.cy << "\n";

  for (const Frame& f : frames) {
    const std::string name = frame_name(f.index);
    write_rgb_png(f.image, (fs::path(dir) / "images" / (name + ".png")).string());
    write_depth_png(f.sparse.grid, (fs::path(dir) / "sparse" / (name + ".png")).string());
    manifest << "images/" << name << ".png sparse/" << name << ".png";
    if (f.gt.defined()) {
      write_depth_png(f.gt, (fs::path(dir) / "gt" / (name + ".png")).string());
      manifest << " gt/" << name << ".png";
    }
    manifest << " 0\n";
    if (f.pose_to_world.has_value()) {
      const Pose& p = *f.pose_to_world;
      for (double v : p.rotation) poses << v << " ";
      poses << p.translation[0] << " " << p.translation[1] << " " << p.translation[2] << "\n";
    }
  }
}

std::vector<Frame> load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path);
  const fs::path root = fs::path(manifest_path).parent_path();

  const std::vector<Intrinsics> cams = read_calibration((root / "calib.txt").string());

  std::vector<Pose> poses;
  {
    std::ifstream pin(root / "poses.txt");
    std::string line;
    while (pin && std::getline(pin, line)) {
      if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
      std::istringstream is(line);
      Pose p;
      for (double& v : p.rotation) is >> v;
      for (double& v : p.translation) is >> v;
      if (!is) throw std::runtime_error("poses.txt: expected 12 floats per line");
      poses.push_back(p);
    }
  }

  std::vector<Frame> frames;
  std::string line;
  int idx = 0;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    std::istringstream is(line);
    std::vector<std::string> tok;
    std::string t;
    while (is >> t) tok.push_back(t);
    if (tok.size() != 3 && tok.size() != 4) {
      throw std::runtime_error("manifest line " + std::to_string(idx + 1) +
                               ": expected 'image depth [gt] calib_index'");
    }
    Frame f;
    f.index = idx;
    f.image = read_rgb_png((root / tok[0]).string());
    f.sparse = SparseDepthMap::from_tensor(read_depth_png((root / tok[1]).string()));
    const std::size_t calib_tok = tok.size() - 1;
    if (tok.size() == 4) f.gt = read_depth_png((root / tok[2]).string());
    const int ci = std::stoi(tok[calib_tok]);
    if (ci < 0 || ci >= static_cast<int>(cams.size())) {
      throw std::runtime_error("manifest line " + std::to_string(idx + 1) +
                               ": calibration index out of range");
    }
    f.k = cams[static_cast<std::size_t>(ci)];
    if (static_cast<std::size_t>(idx) < poses.size()) f.pose_to_world = poses[idx];
    frames.push_back(std::move(f));
    ++idx;
  }
  if (frames.empty()) throw std::runtime_error("manifest has no frames: " + manifest_path);
  return frames;
}

}  // namespace kbnet
