#pragma once

#include "swm/rng.hpp"
#include "swm/tensor.hpp"

namespace swm::test {

inline Tensor random_tensor(Rng& rng, Shape shape, real lo = real(-1), real hi = real(1)) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(rng.uniform(lo, hi));
    return t;
}

inline Tensor random_normal(Rng& rng, Shape shape, real stddev = real(1)) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(rng.normal(0.0, stddev));
    return t;
}

}  // namespace swm::test
