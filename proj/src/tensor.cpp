#include "kbnet/tensor.hpp"

#include <sstream>
#include <stdexcept>
#include <utility>

namespace kbnet {

std::string Shape4::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

static void check_shape(const Shape4& s) {
  if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0) {
    throw std::invalid_argument("tensor shape must be positive, got " + s.str());
  }
}

Tensor Tensor::zeros(Shape4 s) {
  check_shape(s);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = s;
  impl->values.assign(static_cast<std::size_t>(s.numel()), 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::full(Shape4 s, double v) {
  Tensor t = zeros(s);
  for (double& x : t.impl_->values) x = v;
  return t;
}

Tensor Tensor::from_data(Shape4 s, std::vector<double> v) {
  check_shape(s);
  if (static_cast<std::int64_t>(v.size()) != s.numel()) {
    throw std::invalid_argument("tensor data size " + std::to_string(v.size()) +
                                " does not match shape " + s.str());
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = s;
  impl->values = std::move(v);
  return Tensor(std::move(impl));
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("item() requires a scalar tensor, got shape " + shape().str());
  }
  return impl_->values[0];
}

std::vector<double>& Tensor::grad() {
  if (impl_->grad.empty()) {
    impl_->grad.assign(impl_->values.size(), 0.0);
  }
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (impl_->grad.empty()) {
    impl_->grad.assign(impl_->values.size(), 0.0);
  }
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (!impl_->grad.empty()) {
    impl_->grad.assign(impl_->grad.size(), 0.0);
  }
}

Tensor Tensor::clone() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->values = impl_->values;
  impl->requires_grad = impl_->requires_grad;
  return Tensor(std::move(impl));
}

}  // namespace kbnet
