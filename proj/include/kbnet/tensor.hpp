#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace kbnet {

// Dense 4-D shape (batch, channel, height, width).
struct Shape4 {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::int64_t numel() const {
    return static_cast<std::int64_t>(n) * c * h * w;
  }
  bool operator==(const Shape4&) const = default;
  std::string str() const;
};

namespace detail {
struct TensorImpl {
  Shape4 shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first touched
  bool requires_grad = false;
};
}  // namespace detail

// Handle to a dense 4-D double tensor with optional gradient storage.
// Copies share storage; use clone() for a deep copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape4 s);
  static Tensor full(Shape4 s, double v);
  static Tensor from_data(Shape4 s, std::vector<double> v);
  static Tensor scalar(double v) { return full({1, 1, 1, 1}, v); }

  bool defined() const { return impl_ != nullptr; }
  const Shape4& shape() const { return impl_->shape; }
  std::int64_t numel() const { return impl_->shape.numel(); }

  double* data() { return impl_->values.data(); }
  const double* data() const { return impl_->values.data(); }
  std::vector<double>& values() { return impl_->values; }
  const std::vector<double>& values() const { return impl_->values; }

  std::int64_t index(int n, int c, int y, int x) const {
    const Shape4& s = impl_->shape;
    return ((static_cast<std::int64_t>(n) * s.c + c) * s.h + y) * s.w + x;
  }
  double& at(int n, int c, int y, int x) { return impl_->values[index(n, c, y, x)]; }
  double at(int n, int c, int y, int x) const { return impl_->values[index(n, c, y, x)]; }

  // Value of a scalar (1x1x1x1) tensor; throws otherwise.
  double item() const;

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool b) {
    impl_->requires_grad = b;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  // Gradient buffer, allocated as zeros on first access.
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  double* grad_data_or_null() { return impl_->grad.empty() ? nullptr : impl_->grad.data(); }
  const double* grad_data_or_null() const {
    return impl_->grad.empty() ? nullptr : impl_->grad.data();
  }
  void zero_grad();

  Tensor clone() const;  // deep copy of values only

  bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }
  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

}  // namespace kbnet
