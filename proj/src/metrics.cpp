#include "kbnet/metrics.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace kbnet {

std::string EvalResult::csv_line() const {
  std::ostringstream os;
  os.precision(10);
  os << mae_mm << ", " << rmse_mm << ", " << imae_per_km << ", " << irmse_per_km << ", "
     << n_pixels;
  return os.str();
}

void MetricAccumulator::add(const Tensor& pred, const Tensor& gt) {
  if (!(pred.shape() == gt.shape())) {
    throw std::invalid_argument("evaluate: prediction " + pred.shape().str() +
                                " does not match ground truth " + gt.shape().str());
  }
  if (!(cap_.min_m > 0.0) || !(cap_.max_m > cap_.min_m)) {
    throw std::invalid_argument("evaluate: require 0 < cap.min < cap.max");
  }
  const double* p = pred.data();
  const double* g = gt.data();
  for (std::int64_t i = 0; i < pred.numel(); ++i) {
    if (!(g[i] > 0.0) || g[i] < cap_.min_m || g[i] > cap_.max_m) continue;
    const double e = p[i] - g[i];
    const double ie = 1.0 / p[i] - 1.0 / g[i];
    abs_sum_ += std::abs(e);
    sq_sum_ += e * e;
    iabs_sum_ += std::abs(ie);
    isq_sum_ += ie * ie;
    ++n_;
  }
}

EvalResult MetricAccumulator::result() const {
  if (n_ == 0) {
    throw std::runtime_error("evaluate: no valid ground-truth pixels within the cap");
  }
  const double inv = 1.0 / static_cast<double>(n_);
  EvalResult r;
  r.n_pixels = n_;
  r.mae_mm = abs_sum_ * inv * 1000.0;                 // m -> mm
  r.rmse_mm = std::sqrt(sq_sum_ * inv) * 1000.0;
  r.imae_per_km = iabs_sum_ * inv * 1000.0;           // 1/m -> 1/km
  r.irmse_per_km = std::sqrt(isq_sum_ * inv) * 1000.0;
  return r;
}

EvalResult evaluate(const Tensor& pred, const Tensor& gt, DepthCap cap) {
  MetricAccumulator acc(cap);
  acc.add(pred, gt);
  return acc.result();
}

}  // namespace kbnet
