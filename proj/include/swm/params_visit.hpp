#pragma once

#include <functional>
#include <string>

#include "swm/tensor.hpp"

namespace swm {

// Callback for enumerating named parameters in a stable order. Names are
// dotted paths ("mamba.K.ssm.a_log"); the same order is used for
// serialization, hashing and optimizer state.
using ParamVisitor = std::function<void(const std::string&, Tensor&)>;

}  // namespace swm
