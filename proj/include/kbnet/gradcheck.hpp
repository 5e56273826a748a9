#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "kbnet/tape.hpp"
#include "kbnet/tensor.hpp"

namespace kbnet {

struct FiniteDiffOptions {
  double eps = 1e-5;
  // 0 checks every coordinate; otherwise a seeded sample of this many.
  int max_coords = 0;
  std::uint64_t seed = 2024;
};

// Compares the taped gradient of a scalar-valued function against central
// finite differences on the coordinates of `theta`. Returns
// max |analytic - central| / max(|analytic|, |central|, 1e-12).
// `f` must be deterministic and rebuild its graph on the given tape.
double finite_diff_check(const std::function<Tensor(Tape&)>& f, Tensor theta,
                         const FiniteDiffOptions& opts = {});

// A named gradient check returning its max relative error; `tol` is the
// pass threshold.
struct GradCheckCase {
  std::string name;
  double tol;
  std::function<double()> run;
};

// The full gradient suite: every differentiable op, every loss term, and the
// complete network loss against sampled parameters.
std::vector<GradCheckCase> gradcheck_suite();

// Runs the suite, printing one line per case to stdout. Returns the number
// of failures.
int run_gradcheck_suite();

}  // namespace kbnet
