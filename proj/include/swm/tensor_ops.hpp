#pragma once

#include <span>

#include "swm/tensor.hpp"

namespace swm::ops {

// Elementwise
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, real s);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor abs(const Tensor& a);
Tensor silu(const Tensor& a);
Tensor silu_grad(const Tensor& a);       // d silu / dx at a
Tensor gelu(const Tensor& a);            // exact erf form
Tensor gelu_grad(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor softplus_grad(const Tensor& a);   // sigmoid(a)

// Linear algebra (rank-2; rank-1 treated as a single row where noted)
Tensor matmul(const Tensor& a, const Tensor& b);     // [M,K]x[K,N]
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // A x B^T, B is [N,K]
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // A^T x B, A is [K,M]
Tensor transpose(const Tensor& a);
Tensor add_rowvec(const Tensor& x, const Tensor& b);     // x[S,D] + b[D] per row
Tensor outer(const Tensor& u, const Tensor& v);          // u[M] v[N] -> [M,N]
Tensor matvec(const Tensor& m, const Tensor& v);         // [M,N]x[N] -> [M]
Tensor vecmat(const Tensor& v, const Tensor& m);         // [M]x[M,N] -> [N]
Tensor mul_colvec(const Tensor& m, const Tensor& v);     // row i of m scaled by v[i]

// Reductions
real sum(const Tensor& a);
real dot(const Tensor& a, const Tensor& b);
Tensor sum_rows(const Tensor& x);   // [S,D] -> [D], sum over rows
Tensor mean_rows(const Tensor& x);  // [S,D] -> [D]

// Structure
Tensor concat_rows(std::span<const Tensor> parts);                // along axis 0
Tensor concat_cols(std::span<const Tensor> parts);                // along axis 1
Tensor slice_rows(const Tensor& x, std::int64_t r0, std::int64_t r1);
Tensor slice_elems(const Tensor& x, std::int64_t i0, std::int64_t i1);  // rank-1
Tensor row(const Tensor& x, std::int64_t r);                      // [S,D] -> [D]
Tensor stack_rows(std::span<const Tensor> rows);                  // k x [D] -> [k,D]
Tensor reshape(const Tensor& x, Shape shape);

// Neural primitives
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps);
Tensor depthwise_conv1d_causal(const Tensor& x, const Tensor& kernel, const Tensor& bias);
Tensor softmax_rows(const Tensor& x);
// Scaled dot-product attention with 1/sqrt(d_k) logits.
Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v);

// Max |a - b| over all elements; shapes must match.
real max_abs_diff(const Tensor& a, const Tensor& b);
real max_abs(const Tensor& a);

}  // namespace swm::ops
