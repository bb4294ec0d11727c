#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "swm/tensor.hpp"
#include "swm/tensor_ops.hpp"

namespace swm {

class Tape;

// Handle to a value recorded on a tape.
struct Val {
    std::int32_t id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Nodes are recorded in topological order; backward()
// replays them in reverse, accumulating vector-Jacobian products. One tape
// per training step (or per inference window); single-owner, not shared
// across threads.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Tensor& grad_out)>;

    // Record a leaf (input or constant).
    Val put(Tensor value);
    // Record an op result with its backward rule.
    Val emit(Tensor value, BackwardFn backward);
    // For ops whose backward reads their own output value.
    void set_backward(Val v, BackwardFn backward);

    const Tensor& value(Val v) const;
    std::size_t node_count() const { return nodes_.size(); }

    // Runs reverse accumulation from a scalar root. Gradients of earlier
    // backward() calls are discarded.
    void backward(Val root);

    // Gradient of the last backward() root w.r.t. v; zeros if untouched.
    Tensor grad(Val v) const;

    void add_grad(std::int32_t id, const Tensor& g);

private:
    struct Node {
        Tensor value;
        BackwardFn backward;
    };
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
};

// ---- primitives (forward + recorded backward) ----

Val add(Tape& t, Val a, Val b);
Val sub(Tape& t, Val a, Val b);
Val mul(Tape& t, Val a, Val b);
Val neg(Tape& t, Val a);
Val scale(Tape& t, Val a, real s);
Val exp(Tape& t, Val a);
Val log(Tape& t, Val a);
Val abs(Tape& t, Val a);
Val silu(Tape& t, Val a);
Val gelu(Tape& t, Val a);
Val softplus(Tape& t, Val a);

Val matmul(Tape& t, Val a, Val b);
Val transpose(Tape& t, Val a);
Val add_rowvec(Tape& t, Val x, Val b);
Val outer(Tape& t, Val u, Val v);
Val matvec(Tape& t, Val m, Val v);
Val mul_colvec(Tape& t, Val m, Val v);
Val dot(Tape& t, Val a, Val b);          // -> [1]
Val scale_by(Tape& t, Val x, Val s);     // x * scalar s ([1])
Val rsqrt(Tape& t, Val s);               // elementwise 1/sqrt

Val sum(Tape& t, Val a);                 // -> [1]
Val mean(Tape& t, Val a);                // -> [1]
Val sum_rows(Tape& t, Val x);            // [S,D] -> [D]
Val mean_rows(Tape& t, Val x);           // [S,D] -> [D]

Val concat_rows(Tape& t, std::span<const Val> parts);
Val concat_cols(Tape& t, std::span<const Val> parts);
Val slice_rows(Tape& t, Val x, std::int64_t r0, std::int64_t r1);
Val slice_elems(Tape& t, Val x, std::int64_t i0, std::int64_t i1);
Val row(Tape& t, Val x, std::int64_t r);
Val stack_rows(Tape& t, std::span<const Val> rows);
Val reshape(Tape& t, Val x, Shape shape);

Val layer_norm(Tape& t, Val x, Val gamma, Val beta, real eps);
Val depthwise_conv1d_causal(Tape& t, Val x, Val kernel, Val bias);
Val softmax_rows(Tape& t, Val x);

// Composites
Val linear(Tape& t, Val x, Val w, Val b);                 // x.W + b
Val softmax_attention(Tape& t, Val q, Val k, Val v);      // 1/sqrt(d_k) scaling

}  // namespace swm
