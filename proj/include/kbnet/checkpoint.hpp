#pragma once

#include <string>
#include <utility>
#include <vector>

#include "kbnet/kbnet.hpp"
#include "kbnet/tensor.hpp"

namespace kbnet {

// Flat binary container of named 64-bit float arrays: a versioned header, an
// index of (name, shape, offset), then a little-endian double payload.
void save_arrays(const std::string& path,
                 const std::vector<std::pair<std::string, Tensor>>& arrays);
std::vector<std::pair<std::string, Tensor>> load_arrays(const std::string& path);

// Copies checkpoint arrays into an initialized model, validating every shape
// against the parameter layout implied by the NetworkConfig.
void load_model_params(ModelParams& params, const std::string& path);

}  // namespace kbnet
