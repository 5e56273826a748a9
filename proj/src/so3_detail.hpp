#pragma once

#include <cmath>

namespace kbnet::so3 {

// Rodrigues coefficients R = cos(t) I + B w w^T + A [w]_x with
//   A = sin(t)/t, B = (1 - cos(t))/t^2,
// plus the ratios needed by the adjoint:
//   a2 = A'(t)/t, b2 = B'(t)/t.
// Series expansions below the switch point keep everything smooth through
// t = 0; at t = 1e-2 both branches agree to ~1e-11 relative.
struct Coeffs {
  double cos_t;
  double A;
  double B;
  double a2;
  double b2;
};

inline Coeffs coeffs(double t) {
  Coeffs c;
  if (t < 1e-2) {
    const double t2 = t * t;
    c.cos_t = std::cos(t);
    c.A = 1.0 - t2 / 6.0 + t2 * t2 / 120.0;
    c.B = 0.5 - t2 / 24.0 + t2 * t2 / 720.0;
    c.a2 = -1.0 / 3.0 + t2 / 30.0 - t2 * t2 / 840.0;
    c.b2 = -1.0 / 12.0 + t2 / 180.0 - t2 * t2 / 6720.0;
  } else {
    const double s = std::sin(t);
    const double t2 = t * t;
    const double half = std::sin(0.5 * t);
    c.cos_t = std::cos(t);
    c.A = s / t;
    c.B = 2.0 * half * half / t2;
    c.a2 = (t * c.cos_t - s) / (t2 * t);
    c.b2 = (t * s - 2.0 * (1.0 - c.cos_t)) / (t2 * t2);
  }
  return c;
}

// R = cos(t) I + B w w^T + A [w]_x, row-major output.
inline void rodrigues(const double w[3], double r[9]) {
  const double t = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
  const Coeffs c = coeffs(t);
  r[0] = c.cos_t + c.B * w[0] * w[0];
  r[1] = c.B * w[0] * w[1] - c.A * w[2];
  r[2] = c.B * w[0] * w[2] + c.A * w[1];
  r[3] = c.B * w[1] * w[0] + c.A * w[2];
  r[4] = c.cos_t + c.B * w[1] * w[1];
  r[5] = c.B * w[1] * w[2] - c.A * w[0];
  r[6] = c.B * w[2] * w[0] - c.A * w[1];
  r[7] = c.B * w[2] * w[1] + c.A * w[0];
  r[8] = c.cos_t + c.B * w[2] * w[2];
}

// Adjoint of rodrigues: accumulates dL/dw given dL/dR.
inline void rodrigues_backward(const double w[3], const double gr[9], double gw[3]) {
  const double t = std::sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2]);
  const Coeffs c = coeffs(t);
  // dR/dw_k = -A w_k I + b2 w_k w w^T + B (e_k w^T + w e_k^T)
  //           + a2 w_k [w]_x + A d[w]_x/dw_k
  const double skew[9] = {0, -w[2], w[1], w[2], 0, -w[0], -w[1], w[0], 0};
  double tr_g = gr[0] + gr[4] + gr[8];
  double g_wwT = 0.0;   // sum_ij gr_ij w_i w_j
  double g_skew = 0.0;  // sum_ij gr_ij skew_ij
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      g_wwT += gr[3 * i + j] * w[i] * w[j];
      g_skew += gr[3 * i + j] * skew[3 * i + j];
    }
  for (int k = 0; k < 3; ++k) {
    double acc = -c.A * w[k] * tr_g + c.b2 * w[k] * g_wwT + c.a2 * w[k] * g_skew;
    // B (e_k w^T + w e_k^T): rows/columns k
    for (int j = 0; j < 3; ++j) acc += c.B * (gr[3 * k + j] * w[j] + gr[3 * j + k] * w[j]);
    gw[k] += acc;
  }
  // A d[w]_x/dw_k terms
  gw[0] += c.A * (gr[7] - gr[5]);
  gw[1] += c.A * (gr[2] - gr[6]);
  gw[2] += c.A * (gr[3] - gr[1]);
}

}  // namespace kbnet::so3
