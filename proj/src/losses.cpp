#include "kbnet/losses.hpp"

#include <cmath>
#include <iostream>
#include <stdexcept>

namespace kbnet {

namespace {
constexpr double kC1 = 1e-4;  // 0.01^2
constexpr double kC2 = 9e-4;  // 0.03^2
}  // namespace

void LossWeights::validate() const {
  if (w_ph < 0 || w_co < 0 || w_st < 0 || w_sz < 0 || w_sm < 0) {
    throw std::invalid_argument("loss weights must be nonnegative");
  }
}

Tensor ssim(Tape& tape, const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) {
    throw std::invalid_argument("ssim: shape mismatch " + a.shape().str() + " vs " +
                                b.shape().str());
  }
  Tensor mu_a = ops::box_filter3(tape, a);
  Tensor mu_b = ops::box_filter3(tape, b);
  Tensor mu_aa = ops::box_filter3(tape, ops::mul(tape, a, a));
  Tensor mu_bb = ops::box_filter3(tape, ops::mul(tape, b, b));
  Tensor mu_ab = ops::box_filter3(tape, ops::mul(tape, a, b));
  Tensor var_a = ops::sub(tape, mu_aa, ops::mul(tape, mu_a, mu_a));
  Tensor var_b = ops::sub(tape, mu_bb, ops::mul(tape, mu_b, mu_b));
  Tensor cov = ops::sub(tape, mu_ab, ops::mul(tape, mu_a, mu_b));

  Tensor num = ops::mul(tape,
                        ops::add_scalar(tape, ops::mul_scalar(tape, ops::mul(tape, mu_a, mu_b), 2.0), kC1),
                        ops::add_scalar(tape, ops::mul_scalar(tape, cov, 2.0), kC2));
  Tensor den = ops::mul(tape,
                        ops::add_scalar(tape, ops::add(tape, ops::mul(tape, mu_a, mu_a),
                                                       ops::mul(tape, mu_b, mu_b)),
                                        kC1),
                        ops::add_scalar(tape, ops::add(tape, var_a, var_b), kC2));
  return ops::div(tape, num, den);
}

Tensor photometric_loss(Tape& tape, const Tensor& img_t,
                        const std::vector<Reconstruction>& recons, const LossWeights& w) {
  if (recons.empty()) throw std::invalid_argument("photometric_loss: no reconstructions");
  w.validate();

  Tensor acc;
  for (std::size_t r = 0; r < recons.size(); ++r) {
    const Reconstruction& rec = recons[r];
    if (!(rec.image.shape() == img_t.shape())) {
      throw std::invalid_argument("photometric_loss: reconstruction shape " +
                                  rec.image.shape().str() + " does not match image " +
                                  img_t.shape().str());
    }
    double valid = 0.0;
    for (double v : rec.mask.values()) valid += v;
    if (valid <= 0.0) {
      throw std::runtime_error("photometric_loss: degenerate warp, reconstruction " +
                               std::to_string(r) + " has no valid pixels");
    }
    // Invalid pixels are replaced by the target so their (arbitrary) values
    // can never leak into the L1 term or a neighbor's SSIM window.
    Tensor inv_mask = ops::add_scalar(tape, ops::mul_scalar(tape, rec.mask, -1.0), 1.0);
    Tensor filled = ops::add(tape, ops::mul(tape, rec.mask, rec.image),
                             ops::mul(tape, inv_mask, img_t));

    Tensor l1 = ops::channel_mean(tape, ops::abs(tape, ops::sub(tape, filled, img_t)));
    Tensor sim = ops::channel_mean(tape, ssim(tape, filled, img_t));
    Tensor dssim = ops::add_scalar(tape, ops::mul_scalar(tape, sim, -1.0), 1.0);
    Tensor per_px = ops::add(tape, ops::mul_scalar(tape, l1, w.w_co),
                             ops::mul_scalar(tape, dssim, w.w_st));
    Tensor masked = ops::mul(tape, rec.mask, per_px);
    Tensor frame = ops::mul_scalar(tape, ops::sum(tape, masked), 1.0 / valid);
    acc = acc.defined() ? ops::add(tape, acc, frame) : frame;
  }
  return ops::mul_scalar(tape, acc, 1.0 / static_cast<double>(recons.size()));
}

Tensor sparse_consistency_loss(Tape& tape, const Tensor& dhat, const SparseDepthMap& z) {
  const Shape4 ds = dhat.shape();
  const Shape4 zs = z.grid.shape();
  if (ds.h != zs.h || ds.w != zs.w || ds.c != 1) {
    throw std::invalid_argument("sparse_consistency_loss: prediction " + ds.str() +
                                " does not align with sparse map " + zs.str());
  }
  const std::int64_t support = z.support_count();
  if (support == 0) {
    std::cerr << "[kbnet] warning: sparse consistency loss over empty support, using 0\n";
    return Tensor::scalar(0.0);
  }
  Tensor mask = Tensor::zeros(zs);
  const double* zv = z.grid.data();
  double* mv = mask.data();
  for (std::int64_t i = 0; i < mask.numel(); ++i) mv[i] = zv[i] > 0.0 ? 1.0 : 0.0;

  Tensor diff = ops::abs(tape, ops::sub(tape, dhat, z.grid));
  Tensor masked = ops::mul(tape, mask, diff);
  return ops::mul_scalar(tape, ops::sum(tape, masked),
                         1.0 / (static_cast<double>(support) * ds.n));
}

Tensor smoothness_loss(Tape& tape, const Tensor& dhat, const Tensor& img_t) {
  const Shape4 ds = dhat.shape();
  const Shape4 is = img_t.shape();
  if (ds.h != is.h || ds.w != is.w || ds.n != is.n) {
    throw std::invalid_argument("smoothness_loss: prediction " + ds.str() +
                                " does not align with image " + is.str());
  }
  Tensor lam_x = ops::exp(
      tape, ops::neg(tape, ops::channel_mean(tape, ops::abs(tape, ops::grad_x(tape, img_t)))));
  Tensor lam_y = ops::exp(
      tape, ops::neg(tape, ops::channel_mean(tape, ops::abs(tape, ops::grad_y(tape, img_t)))));
  Tensor tv_x = ops::mul(tape, lam_x, ops::abs(tape, ops::grad_x(tape, dhat)));
  Tensor tv_y = ops::mul(tape, lam_y, ops::abs(tape, ops::grad_y(tape, dhat)));
  Tensor total = ops::add(tape, ops::sum(tape, tv_x), ops::sum(tape, tv_y));
  const double inv_omega = 1.0 / (static_cast<double>(ds.n) * ds.h * ds.w);
  return ops::mul_scalar(tape, total, inv_omega);
}

Tensor total_loss(Tape& tape, const Tensor& ph, const Tensor& sz, const Tensor& sm,
                  const LossWeights& w) {
  w.validate();
  const char* names[3] = {"photometric", "sparse-consistency", "smoothness"};
  const Tensor* terms[3] = {&ph, &sz, &sm};
  for (int i = 0; i < 3; ++i) {
    if (!std::isfinite(terms[i]->item())) {
      throw std::runtime_error(std::string("training fault: ") + names[i] +
                               " loss term is not finite");
    }
  }
  Tensor out = ops::mul_scalar(tape, ph, w.w_ph);
  out = ops::add(tape, out, ops::mul_scalar(tape, sz, w.w_sz));
  return ops::add(tape, out, ops::mul_scalar(tape, sm, w.w_sm));
}

}  // namespace kbnet
