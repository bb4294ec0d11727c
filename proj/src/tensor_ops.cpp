#include "swm/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace swm::ops {

namespace {

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
    if (!a.same_shape(b)) {
        throw ShapeError(std::string(what) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    }
}

template <typename F>
Tensor map(const Tensor& a, F f) {
    Tensor out = Tensor::zeros(a.shape());
    const real* pa = a.data();
    real* po = out.data();
    for (std::int64_t i = 0; i < a.size(); ++i) po[i] = f(pa[i]);
    return out;
}

template <typename F>
Tensor zip(const Tensor& a, const Tensor& b, F f, const char* what) {
    require_same_shape(a, b, what);
    Tensor out = Tensor::zeros(a.shape());
    const real* pa = a.data();
    const real* pb = b.data();
    real* po = out.data();
    for (std::int64_t i = 0; i < a.size(); ++i) po[i] = f(pa[i], pb[i]);
    return out;
}

constexpr real kSqrt1_2 = real(0.70710678118654752440);
constexpr real kInvSqrt2Pi = real(0.39894228040143267794);

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return zip(a, b, [](real x, real y) { return x + y; }, "add"); }
Tensor sub(const Tensor& a, const Tensor& b) { return zip(a, b, [](real x, real y) { return x - y; }, "sub"); }
Tensor mul(const Tensor& a, const Tensor& b) { return zip(a, b, [](real x, real y) { return x * y; }, "mul"); }
Tensor neg(const Tensor& a) { return map(a, [](real x) { return -x; }); }
Tensor scale(const Tensor& a, real s) { return map(a, [s](real x) { return s * x; }); }
Tensor exp(const Tensor& a) { return map(a, [](real x) { return std::exp(x); }); }
Tensor log(const Tensor& a) { return map(a, [](real x) { return std::log(x); }); }
Tensor abs(const Tensor& a) { return map(a, [](real x) { return std::abs(x); }); }

Tensor silu(const Tensor& a) {
    return map(a, [](real x) { return x / (real(1) + std::exp(-x)); });
}

Tensor silu_grad(const Tensor& a) {
    return map(a, [](real x) {
        real s = real(1) / (real(1) + std::exp(-x));
        return s * (real(1) + x * (real(1) - s));
    });
}

Tensor gelu(const Tensor& a) {
    return map(a, [](real x) { return real(0.5) * x * (real(1) + std::erf(x * kSqrt1_2)); });
}

Tensor gelu_grad(const Tensor& a) {
    return map(a, [](real x) {
        real cdf = real(0.5) * (real(1) + std::erf(x * kSqrt1_2));
        real pdf = kInvSqrt2Pi * std::exp(real(-0.5) * x * x);
        return cdf + x * pdf;
    });
}

Tensor softplus(const Tensor& a) {
    return map(a, [](real x) {
        // log1p(exp(x)) with overflow guard
        if (x > real(30)) return x;
        return std::log1p(std::exp(x));
    });
}

Tensor softplus_grad(const Tensor& a) {
    return map(a, [](real x) { return real(1) / (real(1) + std::exp(-x)); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul lhs");
    require_rank(b, 2, "matmul rhs");
    const std::int64_t m = a.extent(0), k = a.extent(1);
    if (b.extent(0) != k) {
        throw ShapeError("matmul: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    const std::int64_t n = b.extent(1);
    Tensor out = Tensor::zeros({m, n});
    const real* pa = a.data();
    const real* pb = b.data();
    real* po = out.data();
    for (std::int64_t i = 0; i < m; ++i) {
        real* orow = po + i * n;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const real aik = pa[i * k + kk];
            const real* brow = pb + kk * n;
            for (std::int64_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_nt lhs");
    require_rank(b, 2, "matmul_nt rhs");
    const std::int64_t m = a.extent(0), k = a.extent(1);
    if (b.extent(1) != k) {
        throw ShapeError("matmul_nt: inner dims " + shape_str(a.shape()) + " x " + shape_str(b.shape()) + "^T");
    }
    const std::int64_t n = b.extent(0);
    Tensor out = Tensor::zeros({m, n});
    const real* pa = a.data();
    const real* pb = b.data();
    real* po = out.data();
    for (std::int64_t i = 0; i < m; ++i) {
        const real* arow = pa + i * k;
        real* orow = po + i * n;
        for (std::int64_t j = 0; j < n; ++j) {
            const real* brow = pb + j * k;
            real acc = 0;
            for (std::int64_t kk = 0; kk < k; ++kk) acc += arow[kk] * brow[kk];
            orow[j] = acc;
        }
    }
    return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
    require_rank(a, 2, "matmul_tn lhs");
    require_rank(b, 2, "matmul_tn rhs");
    const std::int64_t k = a.extent(0), m = a.extent(1);
    if (b.extent(0) != k) {
        throw ShapeError("matmul_tn: inner dims " + shape_str(a.shape()) + "^T x " + shape_str(b.shape()));
    }
    const std::int64_t n = b.extent(1);
    Tensor out = Tensor::zeros({m, n});
    const real* pa = a.data();
    const real* pb = b.data();
    real* po = out.data();
    for (std::int64_t kk = 0; kk < k; ++kk) {
        const real* arow = pa + kk * m;
        const real* brow = pb + kk * n;
        for (std::int64_t i = 0; i < m; ++i) {
            const real aik = arow[i];
            real* orow = po + i * n;
            for (std::int64_t j = 0; j < n; ++j) orow[j] += aik * brow[j];
        }
    }
    return out;
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::int64_t m = a.extent(0), n = a.extent(1);
    Tensor out = Tensor::zeros({n, m});
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

Tensor add_rowvec(const Tensor& x, const Tensor& b) {
    require_rank(x, 2, "add_rowvec x");
    require_rank(b, 1, "add_rowvec b");
    if (x.extent(1) != b.extent(0)) {
        throw ShapeError("add_rowvec: " + shape_str(x.shape()) + " + " + shape_str(b.shape()));
    }
    Tensor out = Tensor::zeros(x.shape());
    const std::int64_t s = x.extent(0), d = x.extent(1);
    for (std::int64_t i = 0; i < s; ++i)
        for (std::int64_t j = 0; j < d; ++j) out.at(i, j) = x.at(i, j) + b[j];
    return out;
}

Tensor outer(const Tensor& u, const Tensor& v) {
    require_rank(u, 1, "outer u");
    require_rank(v, 1, "outer v");
    const std::int64_t m = u.extent(0), n = v.extent(0);
    Tensor out = Tensor::zeros({m, n});
    for (std::int64_t i = 0; i < m; ++i)
        for (std::int64_t j = 0; j < n; ++j) out.at(i, j) = u[i] * v[j];
    return out;
}

Tensor matvec(const Tensor& m, const Tensor& v) {
    require_rank(m, 2, "matvec m");
    require_rank(v, 1, "matvec v");
    if (m.extent(1) != v.extent(0)) {
        throw ShapeError("matvec: " + shape_str(m.shape()) + " x " + shape_str(v.shape()));
    }
    const std::int64_t r = m.extent(0), c = m.extent(1);
    Tensor out = Tensor::zeros({r});
    for (std::int64_t i = 0; i < r; ++i) {
        real acc = 0;
        for (std::int64_t j = 0; j < c; ++j) acc += m.at(i, j) * v[j];
        out[i] = acc;
    }
    return out;
}

Tensor vecmat(const Tensor& v, const Tensor& m) {
    require_rank(v, 1, "vecmat v");
    require_rank(m, 2, "vecmat m");
    if (m.extent(0) != v.extent(0)) {
        throw ShapeError("vecmat: " + shape_str(v.shape()) + " x " + shape_str(m.shape()));
    }
    const std::int64_t r = m.extent(0), c = m.extent(1);
    Tensor out = Tensor::zeros({c});
    for (std::int64_t i = 0; i < r; ++i) {
        const real vi = v[i];
        for (std::int64_t j = 0; j < c; ++j) out[j] += vi * m.at(i, j);
    }
    return out;
}

Tensor mul_colvec(const Tensor& m, const Tensor& v) {
    require_rank(m, 2, "mul_colvec m");
    require_rank(v, 1, "mul_colvec v");
    if (m.extent(0) != v.extent(0)) {
        throw ShapeError("mul_colvec: " + shape_str(m.shape()) + " rows vs " + shape_str(v.shape()));
    }
    Tensor out = Tensor::zeros(m.shape());
    const std::int64_t r = m.extent(0), c = m.extent(1);
    for (std::int64_t i = 0; i < r; ++i) {
        const real vi = v[i];
        for (std::int64_t j = 0; j < c; ++j) out.at(i, j) = m.at(i, j) * vi;
    }
    return out;
}

real sum(const Tensor& a) {
    real acc = 0;
    for (auto v : a.values()) acc += v;
    return acc;
}

real dot(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "dot");
    real acc = 0;
    const real* pa = a.data();
    const real* pb = b.data();
    for (std::int64_t i = 0; i < a.size(); ++i) acc += pa[i] * pb[i];
    return acc;
}

Tensor sum_rows(const Tensor& x) {
    require_rank(x, 2, "sum_rows");
    const std::int64_t s = x.extent(0), d = x.extent(1);
    Tensor out = Tensor::zeros({d});
    for (std::int64_t i = 0; i < s; ++i)
        for (std::int64_t j = 0; j < d; ++j) out[j] += x.at(i, j);
    return out;
}

Tensor mean_rows(const Tensor& x) { return scale(sum_rows(x), real(1) / real(x.extent(0))); }

Tensor concat_rows(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_rows: no parts");
    const std::int64_t d = parts[0].cols();
    std::int64_t total = 0;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_rows part");
        if (p.extent(1) != d) {
            throw ShapeError("concat_rows: column mismatch " + shape_str(p.shape()));
        }
        total += p.extent(0);
    }
    Tensor out = Tensor::zeros({total, d});
    real* po = out.data();
    for (const auto& p : parts) {
        std::memcpy(po, p.data(), static_cast<std::size_t>(p.size()) * sizeof(real));
        po += p.size();
    }
    return out;
}

Tensor concat_cols(std::span<const Tensor> parts) {
    if (parts.empty()) throw ShapeError("concat_cols: no parts");
    const std::int64_t s = parts[0].extent(0);
    std::int64_t total = 0;
    for (const auto& p : parts) {
        require_rank(p, 2, "concat_cols part");
        if (p.extent(0) != s) throw ShapeError("concat_cols: row mismatch " + shape_str(p.shape()));
        total += p.extent(1);
    }
    Tensor out = Tensor::zeros({s, total});
    std::int64_t off = 0;
    for (const auto& p : parts) {
        const std::int64_t pc = p.extent(1);
        for (std::int64_t i = 0; i < s; ++i)
            for (std::int64_t j = 0; j < pc; ++j) out.at(i, off + j) = p.at(i, j);
        off += pc;
    }
    return out;
}

Tensor slice_rows(const Tensor& x, std::int64_t r0, std::int64_t r1) {
    require_rank(x, 2, "slice_rows");
    if (r0 < 0 || r1 > x.extent(0) || r0 >= r1) {
        throw ShapeError("slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) +
                         ") for " + shape_str(x.shape()));
    }
    const std::int64_t d = x.extent(1);
    Tensor out = Tensor::zeros({r1 - r0, d});
    std::memcpy(out.data(), x.data() + r0 * d, static_cast<std::size_t>((r1 - r0) * d) * sizeof(real));
    return out;
}

Tensor slice_elems(const Tensor& x, std::int64_t i0, std::int64_t i1) {
    require_rank(x, 1, "slice_elems");
    if (i0 < 0 || i1 > x.extent(0) || i0 >= i1) {
        throw ShapeError("slice_elems: bad range for " + shape_str(x.shape()));
    }
    Tensor out = Tensor::zeros({i1 - i0});
    std::memcpy(out.data(), x.data() + i0, static_cast<std::size_t>(i1 - i0) * sizeof(real));
    return out;
}

Tensor row(const Tensor& x, std::int64_t r) {
    require_rank(x, 2, "row");
    if (r < 0 || r >= x.extent(0)) throw ShapeError("row: index out of range");
    const std::int64_t d = x.extent(1);
    Tensor out = Tensor::zeros({d});
    std::memcpy(out.data(), x.data() + r * d, static_cast<std::size_t>(d) * sizeof(real));
    return out;
}

Tensor stack_rows(std::span<const Tensor> rows) {
    if (rows.empty()) throw ShapeError("stack_rows: no rows");
    const std::int64_t d = rows[0].size();
    Tensor out = Tensor::zeros({static_cast<std::int64_t>(rows.size()), d});
    real* po = out.data();
    for (const auto& r : rows) {
        require_rank(r, 1, "stack_rows element");
        if (r.size() != d) throw ShapeError("stack_rows: length mismatch");
        std::memcpy(po, r.data(), static_cast<std::size_t>(d) * sizeof(real));
        po += d;
    }
    return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
    std::int64_t n = 1;
    for (auto e : shape) n *= e;
    if (n != x.size()) {
        throw ShapeError("reshape: size mismatch " + shape_str(x.shape()) + " -> " + shape_str(shape));
    }
    return Tensor::from_data(std::move(shape), std::vector<real>(x.data(), x.data() + x.size()));
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, real eps) {
    require_rank(x, 2, "layer_norm x");
    require_rank(gamma, 1, "layer_norm gamma");
    require_rank(beta, 1, "layer_norm beta");
    const std::int64_t s = x.extent(0), d = x.extent(1);
    if (gamma.extent(0) != d || beta.extent(0) != d) {
        throw ShapeError("layer_norm: gamma/beta " + shape_str(gamma.shape()) + "/" +
                         shape_str(beta.shape()) + " vs feature dim " + std::to_string(d));
    }
    if (eps <= 0) throw ConfigError("layer_norm: eps must be positive");
    Tensor out = Tensor::zeros(x.shape());
    for (std::int64_t i = 0; i < s; ++i) {
        real mean = 0;
        for (std::int64_t j = 0; j < d; ++j) mean += x.at(i, j);
        mean /= real(d);
        real var = 0;
        for (std::int64_t j = 0; j < d; ++j) {
            const real c = x.at(i, j) - mean;
            var += c * c;
        }
        var /= real(d);
        const real inv = real(1) / std::sqrt(var + eps);
        for (std::int64_t j = 0; j < d; ++j) {
            out.at(i, j) = gamma[j] * ((x.at(i, j) - mean) * inv) + beta[j];
        }
    }
    return out;
}

Tensor depthwise_conv1d_causal(const Tensor& x, const Tensor& kernel, const Tensor& bias) {
    require_rank(x, 2, "conv x");
    require_rank(kernel, 2, "conv kernel");
    require_rank(bias, 1, "conv bias");
    const std::int64_t s = x.extent(0), d = x.extent(1), k = kernel.extent(0);
    if (kernel.extent(1) != d || bias.extent(0) != d) {
        throw ShapeError("conv: kernel " + shape_str(kernel.shape()) + " / bias " +
                         shape_str(bias.shape()) + " vs channels " + std::to_string(d));
    }
    Tensor out = Tensor::zeros(x.shape());
    for (std::int64_t t = 0; t < s; ++t) {
        for (std::int64_t c = 0; c < d; ++c) {
            real acc = bias[c];
            for (std::int64_t j = 0; j < k; ++j) {
                const std::int64_t src = t - (k - 1) + j;  // left padding with zeros
                if (src >= 0) acc += kernel.at(j, c) * x.at(src, c);
            }
            out.at(t, c) = acc;
        }
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    require_rank(x, 2, "softmax_rows");
    const std::int64_t s = x.extent(0), d = x.extent(1);
    Tensor out = Tensor::zeros(x.shape());
    for (std::int64_t i = 0; i < s; ++i) {
        real mx = x.at(i, 0);
        for (std::int64_t j = 1; j < d; ++j) mx = std::max(mx, x.at(i, j));
        real z = 0;
        for (std::int64_t j = 0; j < d; ++j) {
            const real e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            z += e;
        }
        const real inv = real(1) / z;
        for (std::int64_t j = 0; j < d; ++j) out.at(i, j) *= inv;
    }
    return out;
}

Tensor softmax_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
    require_rank(q, 2, "attention q");
    require_rank(k, 2, "attention k");
    require_rank(v, 2, "attention v");
    if (k.extent(0) == 0) throw EmptyContextError("attention: empty key/value context");
    if (q.extent(1) != k.extent(1)) {
        throw ShapeError("attention: q/k dim mismatch " + shape_str(q.shape()) + " vs " +
                         shape_str(k.shape()));
    }
    if (k.extent(0) != v.extent(0)) {
        throw ShapeError("attention: k/v length mismatch " + shape_str(k.shape()) + " vs " +
                         shape_str(v.shape()));
    }
    const real inv_sqrt_dk = real(1) / std::sqrt(real(q.extent(1)));
    Tensor logits = scale(matmul_nt(q, k), inv_sqrt_dk);
    return matmul(softmax_rows(logits), v);
}

real max_abs_diff(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "max_abs_diff");
    real m = 0;
    const real* pa = a.data();
    const real* pb = b.data();
    for (std::int64_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(pa[i] - pb[i]));
    return m;
}

real max_abs(const Tensor& a) {
    real m = 0;
    for (auto v : a.values()) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace swm::ops
