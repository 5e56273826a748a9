#include "kbnet/tape.hpp"

#include <stdexcept>

namespace kbnet {

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.numel() != 1) {
    throw std::invalid_argument("backward requires a scalar loss, got shape " +
                                (loss.defined() ? loss.shape().str() : std::string("<undefined>")));
  }
  Tensor seed = loss;
  seed.grad()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    (*it)();
  }
}

}  // namespace kbnet
