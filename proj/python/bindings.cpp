#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <array>
#include <stdexcept>

#include "kbnet/camera.hpp"
#include "kbnet/checkpoint.hpp"
#include "kbnet/config.hpp"
#include "kbnet/data_io.hpp"
#include "kbnet/losses.hpp"
#include "kbnet/metrics.hpp"
#include "kbnet/trainer.hpp"

namespace py = pybind11;
using namespace kbnet;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor grid_from_numpy(const Array& a) {
  if (a.ndim() != 2) throw std::invalid_argument("expected a 2-D (h, w) array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  Tensor t = Tensor::zeros({1, 1, h, w});
  std::copy(a.data(), a.data() + t.numel(), t.data());
  return t;
}

// HWC float image -> (1, C, H, W)
Tensor image_from_numpy(const Array& a) {
  if (a.ndim() != 3) throw std::invalid_argument("expected a 3-D (h, w, c) array");
  const int h = static_cast<int>(a.shape(0));
  const int w = static_cast<int>(a.shape(1));
  const int c = static_cast<int>(a.shape(2));
  Tensor t = Tensor::zeros({1, c, h, w});
  const double* src = a.data();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int ch = 0; ch < c; ++ch) t.at(0, ch, y, x) = src[(y * w + x) * c + ch];
  return t;
}

py::array grid_to_numpy(const Tensor& t) {
  const Shape4 s = t.shape();
  py::array_t<double> out({s.h, s.w});
  std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
  return out;
}

py::array image_to_numpy(const Tensor& t) {
  const Shape4 s = t.shape();
  py::array_t<double> out({s.h, s.w, s.c});
  double* dst = out.mutable_data();
  for (int y = 0; y < s.h; ++y)
    for (int x = 0; x < s.w; ++x)
      for (int c = 0; c < s.c; ++c) dst[(y * s.w + x) * s.c + c] = t.at(0, c, y, x);
  return out;
}

py::array rotation_to_numpy(const Pose& p) {
  py::array_t<double> out({3, 3});
  std::copy(p.rotation.begin(), p.rotation.end(), out.mutable_data());
  return out;
}

Pose pose_from_numpy(const Array& rot, const Array& trans) {
  if (rot.size() != 9 || trans.size() != 3) {
    throw std::invalid_argument("pose expects a 3x3 rotation and length-3 translation");
  }
  Pose p;
  std::copy(rot.data(), rot.data() + 9, p.rotation.begin());
  std::copy(trans.data(), trans.data() + 3, p.translation.begin());
  return p;
}

MotionProfile motion_from_string(const std::string& s) {
  if (s == "static") return MotionProfile::Static;
  if (s == "translate-x") return MotionProfile::TranslateX;
  if (s == "mixed") return MotionProfile::Mixed;
  throw std::invalid_argument("motion must be 'static', 'translate-x' or 'mixed'");
}

struct PyModel {
  RunConfig cfg;
  ModelParams params;

  PyModel(const std::string& preset_or_path, std::uint64_t seed) {
    if (preset_or_path == "synthetic" || preset_or_path == "kitti" ||
        preset_or_path == "void") {
      cfg = default_run_config(preset_or_path);
    } else {
      cfg = load_run_config(preset_or_path);
    }
    cfg.train.seed = seed;
    params = init_model_params(cfg.network, seed, /*with_pose=*/false);
  }

  py::array infer(const Array& image, const Array& sparse,
                  std::array<double, 4> intrinsics) const {
    Frame f;
    f.image = image_from_numpy(image);
    f.sparse = SparseDepthMap::from_tensor(grid_from_numpy(sparse));
    f.k = Intrinsics{intrinsics[0], intrinsics[1], intrinsics[2], intrinsics[3]};
    return grid_to_numpy(infer_depth(f, params, cfg.network));
  }

  void save(const std::string& path) const { save_arrays(path, params.named_parameters()); }
  void load(const std::string& path) { load_model_params(params, path); }
  std::int64_t parameter_count() const { return params.parameter_count(false); }
};

}  // namespace

PYBIND11_MODULE(_kbnet, m) {
  m.doc() = "Depth completion with calibrated backprojection layers";

  py::class_<Intrinsics>(m, "Intrinsics")
      .def(py::init<double, double, double, double>(), py::arg("fx"), py::arg("fy"),
           py::arg("cx"), py::arg("cy"))
      .def_readwrite("fx", &Intrinsics::fx)
      .def_readwrite("fy", &Intrinsics::fy)
      .def_readwrite("cx", &Intrinsics::cx)
      .def_readwrite("cy", &Intrinsics::cy)
      .def("__repr__", [](const Intrinsics& k) {
        return "Intrinsics(fx=" + std::to_string(k.fx) + ", fy=" + std::to_string(k.fy) +
               ", cx=" + std::to_string(k.cx) + ", cy=" + std::to_string(k.cy) + ")";
      });

  py::class_<Pose>(m, "Pose")
      .def(py::init([](const Array& rot, const Array& trans) {
             return pose_from_numpy(rot, trans);
           }),
           py::arg("rotation"), py::arg("translation"))
      .def_static("identity", &Pose::identity)
      .def_property_readonly("rotation", &rotation_to_numpy)
      .def_property_readonly("translation", [](const Pose& p) {
        py::array_t<double> out(3);
        std::copy(p.translation.begin(), p.translation.end(), out.mutable_data());
        return out;
      });

  m.def("scale_intrinsics", &scale_intrinsics, py::arg("k"), py::arg("level"));
  m.def("lift", [](const Intrinsics& k, double u, double v) { return lift(k, u, v); });
  m.def("backproject", [](const Intrinsics& k, double u, double v, double d) {
    return backproject(k, u, v, d);
  });
  m.def("project", [](const Intrinsics& k, std::array<double, 3> p) { return project(k, p); });
  m.def("exp_se3", [](std::array<double, 6> v) { return exp_se3(v); });
  m.def("compose", &compose);
  m.def("inverse", &inverse);

  m.def("masked_min_pool", [](const Array& z, int k) {
    auto out = masked_min_pool(SparseDepthMap::from_tensor(grid_from_numpy(z)), k);
    return grid_to_numpy(out.grid);
  });
  m.def("masked_max_pool", [](const Array& z, int k) {
    auto out = masked_max_pool(SparseDepthMap::from_tensor(grid_from_numpy(z)), k);
    return grid_to_numpy(out.grid);
  });

  m.def("ssim", [](const Array& a, const Array& b) {
    Tape tape;
    tape.set_enabled(false);
    return image_to_numpy(ssim(tape, image_from_numpy(a), image_from_numpy(b)));
  });

  m.def(
      "reconstruct",
      [](const Array& source, const Array& depth, const Pose& pose, const Intrinsics& k) {
        Tape tape;
        tape.set_enabled(false);
        auto rec = reconstruct(tape, image_from_numpy(source), grid_from_numpy(depth), pose, k);
        return py::make_tuple(image_to_numpy(rec.image), grid_to_numpy(rec.mask));
      },
      py::arg("source"), py::arg("depth"), py::arg("pose"), py::arg("k"));

  m.def("photometric_loss", [](const Array& target, const Array& recon, const Array& mask) {
    Tape tape;
    tape.set_enabled(false);
    LossWeights w;
    Reconstruction r{image_from_numpy(recon), grid_from_numpy(mask)};
    return photometric_loss(tape, image_from_numpy(target), {r}, w).item();
  });
  m.def("sparse_consistency_loss", [](const Array& dhat, const Array& z) {
    Tape tape;
    tape.set_enabled(false);
    return sparse_consistency_loss(tape, grid_from_numpy(dhat),
                                   SparseDepthMap::from_tensor(grid_from_numpy(z)))
        .item();
  });
  m.def("smoothness_loss", [](const Array& dhat, const Array& image) {
    Tape tape;
    tape.set_enabled(false);
    return smoothness_loss(tape, grid_from_numpy(dhat), image_from_numpy(image)).item();
  });

  m.def(
      "evaluate",
      [](const Array& pred, const Array& gt, double cap_min, double cap_max) {
        const EvalResult r = evaluate(grid_from_numpy(pred), grid_from_numpy(gt),
                                      DepthCap{cap_min, cap_max});
        py::dict d;
        d["mae_mm"] = r.mae_mm;
        d["rmse_mm"] = r.rmse_mm;
        d["imae_per_km"] = r.imae_per_km;
        d["irmse_per_km"] = r.irmse_per_km;
        d["n_pixels"] = r.n_pixels;
        return d;
      },
      py::arg("pred"), py::arg("gt"), py::arg("cap_min") = 0.2, py::arg("cap_max") = 5.0);

  m.def(
      "synth_scene",
      [](int frames, int width, int height, std::array<double, 4> intrinsics,
         const std::string& motion, std::uint64_t seed, double density) {
        SynthSpec spec;
        spec.n_frames = frames;
        spec.width = width;
        spec.height = height;
        spec.k = Intrinsics{intrinsics[0], intrinsics[1], intrinsics[2], intrinsics[3]};
        spec.motion = motion_from_string(motion);
        spec.seed = seed;
        spec.sparse_density = density;
        py::list out;
        for (const Frame& f : synth_scene(spec)) {
          py::dict d;
          d["image"] = image_to_numpy(f.image);
          d["sparse"] = grid_to_numpy(f.sparse.grid);
          d["gt"] = grid_to_numpy(f.gt);
          d["k"] = py::make_tuple(f.k.fx, f.k.fy, f.k.cx, f.k.cy);
          d["pose"] = *f.pose_to_world;
          out.append(d);
        }
        return out;
      },
      py::arg("frames") = 8, py::arg("width") = 96, py::arg("height") = 64,
      py::arg("intrinsics") = std::array<double, 4>{80.0, 80.0, 47.5, 31.5},
      py::arg("motion") = "mixed", py::arg("seed") = 7, py::arg("density") = 0.005);

  m.def("subsample_sparse", [](const Array& dense, double density, const std::string& strategy,
                               std::uint64_t seed) {
    const SampleStrategy s =
        strategy == "grid" ? SampleStrategy::Grid : SampleStrategy::UniformRandom;
    return grid_to_numpy(subsample_sparse(grid_from_numpy(dense), density, s, seed).grid);
  });

  m.def("read_depth_png", [](const std::string& p) { return grid_to_numpy(read_depth_png(p)); });
  m.def("write_depth_png",
        [](const Array& d, const std::string& p) { write_depth_png(grid_from_numpy(d), p); });
  m.def("read_rgb_png", [](const std::string& p) { return image_to_numpy(read_rgb_png(p)); });
  m.def("write_rgb_png",
        [](const Array& img, const std::string& p) { write_rgb_png(image_from_numpy(img), p); });

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::string&, std::uint64_t>(), py::arg("config") = "synthetic",
           py::arg("seed") = 1)
      .def("infer", &PyModel::infer, py::arg("image"), py::arg("sparse"), py::arg("intrinsics"))
      .def("save", &PyModel::save)
      .def("load", &PyModel::load)
      .def_property_readonly("parameter_count", &PyModel::parameter_count);
}
