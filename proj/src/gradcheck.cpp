#include "kbnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "kbnet/random.hpp"

namespace kbnet {

double finite_diff_check(const std::function<Tensor(Tape&)>& f, Tensor theta,
                         const FiniteDiffOptions& opts) {
  if (opts.eps <= 0.0) throw std::invalid_argument("finite_diff_check: eps must be > 0");
  theta.set_requires_grad(true);

  Tape tape;
  Tensor loss = f(tape);
  if (loss.numel() != 1) {
    throw std::invalid_argument("finite_diff_check: f must return a scalar");
  }
  theta.zero_grad();
  tape.backward(loss);
  const std::vector<double> analytic = theta.grad();

  std::vector<std::int64_t> coords;
  const std::int64_t n = theta.numel();
  if (opts.max_coords <= 0 || opts.max_coords >= n) {
    coords.resize(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
  } else {
    Rng rng(opts.seed);
    for (int i = 0; i < opts.max_coords; ++i) {
      coords.push_back(static_cast<std::int64_t>(rng.next_u64() % static_cast<std::uint64_t>(n)));
    }
  }

  double max_rel = 0.0;
  double* v = theta.data();
  for (std::int64_t i : coords) {
    const double saved = v[i];
    v[i] = saved + opts.eps;
    Tape tp;
    tp.set_enabled(false);
    const double fp = f(tp).item();
    v[i] = saved - opts.eps;
    Tape tm;
    tm.set_enabled(false);
    const double fm = f(tm).item();
    v[i] = saved;
    const double central = (fp - fm) / (2.0 * opts.eps);
    const double a = analytic[static_cast<std::size_t>(i)];
    const double denom = std::max({std::abs(a), std::abs(central), 1e-12});
    max_rel = std::max(max_rel, std::abs(a - central) / denom);
  }
  return max_rel;
}

}  // namespace kbnet
