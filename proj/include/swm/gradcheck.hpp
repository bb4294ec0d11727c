#pragma once

#include <functional>
#include <span>

#include "swm/autodiff.hpp"

namespace swm {

// A scalar-valued map built from tape primitives. Receives one Val per
// input tensor, in order.
using ScalarFn = std::function<Val(Tape&, std::span<const Val>)>;

// Compares reverse-mode gradients against central finite differences.
// Returns max over all input coordinates of
//   |analytic - central| / max(1, |central|).
// Throws NumericError if any analytic gradient is non-finite, ConfigError
// for eps outside [1e-7, 1e-4].
real check_gradient(const ScalarFn& f, std::span<const Tensor> inputs, real eps = real(1e-5));

}  // namespace swm
