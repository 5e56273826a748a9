#pragma once

#include <cstdint>
#include <string>

#include "kbnet/tensor.hpp"

namespace kbnet {

// Benchmark error metrics. MAE/RMSE are reported in millimeters, iMAE/iRMSE
// in inverse kilometers.
struct EvalResult {
  double mae_mm = 0.0;
  double rmse_mm = 0.0;
  double imae_per_km = 0.0;
  double irmse_per_km = 0.0;
  std::int64_t n_pixels = 0;

  std::string csv_line() const;  // "mae_mm, rmse_mm, imae_per_km, irmse_per_km, n_pixels"
};

struct DepthCap {
  double min_m = 0.2;
  double max_m = 5.0;
};

// Accumulates squared/absolute errors over pixels where the ground truth is
// valid (> 0) and inside the cap; the prediction itself is never capped.
class MetricAccumulator {
 public:
  explicit MetricAccumulator(DepthCap cap) : cap_(cap) {}
  void add(const Tensor& pred, const Tensor& gt);
  EvalResult result() const;  // throws if no valid pixels were seen
  std::int64_t n_pixels() const { return n_; }

 private:
  DepthCap cap_;
  double abs_sum_ = 0.0, sq_sum_ = 0.0, iabs_sum_ = 0.0, isq_sum_ = 0.0;
  std::int64_t n_ = 0;
};

// Single-frame evaluation of prediction against ground truth (0 = invalid).
EvalResult evaluate(const Tensor& pred, const Tensor& gt, DepthCap cap);

}  // namespace kbnet
