#include "swm/gradcheck.hpp"

#include <cmath>
#include <vector>

namespace swm {

namespace {

real evaluate(const ScalarFn& f, std::span<const Tensor> inputs) {
    Tape tape;
    std::vector<Val> vals;
    vals.reserve(inputs.size());
    for (const auto& in : inputs) vals.push_back(tape.put(in));
    Val out = f(tape, vals);
    const Tensor& y = tape.value(out);
    if (y.size() != 1) throw ShapeError("check_gradient: f must return a scalar");
    return y[0];
}

}  // namespace

real check_gradient(const ScalarFn& f, std::span<const Tensor> inputs, real eps) {
    if (eps < real(1e-7) || eps > real(1e-4)) {
        throw ConfigError("check_gradient: eps must lie in [1e-7, 1e-4]");
    }

    // Analytic pass
    Tape tape;
    std::vector<Val> vals;
    for (const auto& in : inputs) vals.push_back(tape.put(in));
    Val out = f(tape, vals);
    if (tape.value(out).size() != 1) throw ShapeError("check_gradient: f must return a scalar");
    tape.backward(out);
    std::vector<Tensor> analytic;
    analytic.reserve(inputs.size());
    for (auto v : vals) {
        Tensor g = tape.grad(v);
        if (!g.all_finite()) throw NumericError("check_gradient: non-finite analytic gradient");
        analytic.push_back(std::move(g));
    }

    // Central differences, one coordinate at a time
    real max_rel = 0;
    std::vector<Tensor> work(inputs.begin(), inputs.end());
    for (std::size_t i = 0; i < work.size(); ++i) {
        for (std::int64_t c = 0; c < work[i].size(); ++c) {
            const real orig = work[i][c];
            work[i][c] = orig + eps;
            const real up = evaluate(f, work);
            work[i][c] = orig - eps;
            const real down = evaluate(f, work);
            work[i][c] = orig;
            const real central = (up - down) / (2 * eps);
            const real rel = std::abs(analytic[i][c] - central) /
                             std::max(real(1), std::abs(central));
            max_rel = std::max(max_rel, rel);
        }
    }
    return max_rel;
}

}  // namespace swm
