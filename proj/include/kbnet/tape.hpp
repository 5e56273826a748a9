#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "kbnet/tensor.hpp"

namespace kbnet {

// Define-by-run gradient tape. Ops append adjoint closures as they execute;
// backward() replays them in exact reverse order of recording. Gradients
// accumulate additively when a tensor feeds multiple consumers.
class Tape {
 public:
  void record(std::function<void()> fn) {
    if (enabled_) nodes_.push_back(std::move(fn));
  }

  bool recording() const { return enabled_; }
  void set_enabled(bool b) { enabled_ = b; }
  std::size_t size() const { return nodes_.size(); }

  // Seeds the scalar loss with adjoint 1 and runs every recorded adjoint in
  // reverse. Rejects non-scalar losses.
  void backward(const Tensor& loss);

  void clear() { nodes_.clear(); }

 private:
  std::vector<std::function<void()>> nodes_;
  bool enabled_ = true;
};

// RAII guard disabling recording, for pure evaluation passes.
class NoGradGuard {
 public:
  explicit NoGradGuard(Tape& tape) : tape_(tape), prev_(tape.recording()) {
    tape_.set_enabled(false);
  }
  ~NoGradGuard() { tape_.set_enabled(prev_); }

 private:
  Tape& tape_;
  bool prev_;
};

}  // namespace kbnet
