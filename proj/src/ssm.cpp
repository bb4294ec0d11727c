#include "swm/ssm.hpp"

#include <cmath>
#include <vector>

namespace swm {

namespace {

Tensor normal_init(Rng& rng, Shape shape, real stddev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(rng.normal(0.0, stddev));
    return t;
}

}  // namespace

SsmParams SsmParams::init(std::int64_t d_inner, std::int64_t n_state, Rng& rng) {
    SsmParams p;
    // S4D-real style: A = -(1..N) per channel
    p.a_log = Tensor::zeros({d_inner, n_state});
    for (std::int64_t d = 0; d < d_inner; ++d)
        for (std::int64_t n = 0; n < n_state; ++n)
            p.a_log.at(d, n) = std::log(real(n + 1));
    const real w_std = real(1) / std::sqrt(real(d_inner));
    p.b_proj_w = normal_init(rng, {d_inner, n_state}, w_std);
    p.b_proj_b = Tensor::zeros({n_state});
    p.c_proj_w = normal_init(rng, {d_inner, n_state}, w_std);
    p.c_proj_b = Tensor::zeros({n_state});
    p.delta_proj_w = normal_init(rng, {d_inner, d_inner}, w_std * real(0.1));
    // bias chosen so softplus(bias) ~ 0.1
    p.delta_proj_b = Tensor::full({d_inner}, std::log(std::exp(real(0.1)) - real(1)));
    p.d_skip = Tensor::full({d_inner}, 1);
    return p;
}

SsmVals bind(Tape& t, const SsmParams& p) {
    return SsmVals{t.put(p.a_log),        t.put(p.b_proj_w),     t.put(p.b_proj_b),
                   t.put(p.c_proj_w),     t.put(p.c_proj_b),     t.put(p.delta_proj_w),
                   t.put(p.delta_proj_b), t.put(p.d_skip)};
}

void visit_params(SsmParams& p, const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".a_log", p.a_log);
    fn(prefix + ".b_proj.W", p.b_proj_w);
    fn(prefix + ".b_proj.b", p.b_proj_b);
    fn(prefix + ".c_proj.W", p.c_proj_w);
    fn(prefix + ".c_proj.b", p.c_proj_b);
    fn(prefix + ".delta_proj.W", p.delta_proj_w);
    fn(prefix + ".delta_proj.b", p.delta_proj_b);
    fn(prefix + ".d_skip", p.d_skip);
}

SsmState SsmState::zeros(std::int64_t d_inner, std::int64_t n_state) {
    return SsmState{Tensor::zeros({d_inner, n_state})};
}

ScanResult selective_scan_core(Tape& t, Val u, Val delta, Val b_seq, Val c_seq, Val a_log,
                               Val d_skip, Val h0) {
    const Tensor& uv = t.value(u);
    const Tensor& av = t.value(a_log);
    const std::int64_t s = uv.extent(0);
    const std::int64_t d = av.extent(0);
    const std::int64_t n = av.extent(1);
    if (uv.extent(1) != d) {
        throw ShapeError("scan: input dim " + shape_str(uv.shape()) + " vs A " + shape_str(av.shape()));
    }
    if (t.value(h0).shape() != Shape{d, n}) {
        throw StateError("scan: state shape " + shape_str(t.value(h0).shape()) + ", expected " +
                         shape_str({d, n}));
    }
    if (s < 1) throw ShapeError("scan: sequence must have at least one position");

    Val a = neg(t, exp(t, a_log));  // A = -exp(a_log), elementwise negative
    Val h = h0;
    std::vector<Val> ys;
    ys.reserve(static_cast<std::size_t>(s));
    for (std::int64_t i = 0; i < s; ++i) {
        Val u_i = row(t, u, i);
        Val delta_i = row(t, delta, i);
        Val b_i = row(t, b_seq, i);
        Val c_i = row(t, c_seq, i);
        Val a_bar = exp(t, mul_colvec(t, a, delta_i));       // [D,N] in (0,1)
        Val drive = outer(t, mul(t, delta_i, u_i), b_i);     // (delta (x) B) u
        h = add(t, mul(t, a_bar, h), drive);
        ys.push_back(add(t, matvec(t, h, c_i), mul(t, d_skip, u_i)));
    }
    return ScanResult{stack_rows(t, ys), h};
}

ScanResult selective_scan_sequential(Tape& t, Val u, const SsmVals& p, Val h0) {
    Val delta = softplus(t, linear(t, u, p.delta_proj_w, p.delta_proj_b));
    Val b_seq = linear(t, u, p.b_proj_w, p.b_proj_b);
    Val c_seq = linear(t, u, p.c_proj_w, p.c_proj_b);
    return selective_scan_core(t, u, delta, b_seq, c_seq, p.a_log, p.d_skip, h0);
}

ScanResult selective_scan_chunked(Tape& t, Val u, const SsmVals& p, Val h0, std::int64_t chunk) {
    if (chunk < 1) throw ConfigError("scan: chunk must be >= 1");
    const std::int64_t s = t.value(u).extent(0);
    Val h = h0;
    std::vector<Val> pieces;
    for (std::int64_t start = 0; start < s; start += chunk) {
        const std::int64_t stop = std::min(start + chunk, s);
        Val u_chunk = (start == 0 && stop == s) ? u : slice_rows(t, u, start, stop);
        ScanResult r = selective_scan_sequential(t, u_chunk, p, h);
        pieces.push_back(r.y);
        h = r.h_final;
    }
    Val y = pieces.size() == 1 ? pieces[0] : concat_rows(t, pieces);
    return ScanResult{y, h};
}

MambaBlockParams MambaBlockParams::init(std::int64_t d, const MambaConfig& cfg, Rng& rng) {
    const std::int64_t d_inner = cfg.expand * d;
    MambaBlockParams p;
    p.ln_gamma = Tensor::full({d}, 1);
    p.ln_beta = Tensor::zeros({d});
    const real in_std = real(1) / std::sqrt(real(d));
    p.in_ssm_w = normal_init(rng, {d, d_inner}, in_std);
    p.in_ssm_b = Tensor::zeros({d_inner});
    // gate lives in model dim: the gated product applies after the
    // out-projection, alongside the residual
    p.in_gate_w = normal_init(rng, {d, d}, in_std);
    p.in_gate_b = Tensor::zeros({d});
    p.dw_kernel = normal_init(rng, {cfg.dw_kernel, d_inner}, real(1) / std::sqrt(real(cfg.dw_kernel)));
    p.dw_bias = Tensor::zeros({d_inner});
    p.ssm = SsmParams::init(d_inner, cfg.n_state, rng);
    p.out_w = normal_init(rng, {d_inner, d}, real(1) / std::sqrt(real(d_inner)));
    p.out_b = Tensor::zeros({d});
    return p;
}

MambaBlockVals bind(Tape& t, const MambaBlockParams& p) {
    MambaBlockVals v;
    v.ln_gamma = t.put(p.ln_gamma);
    v.ln_beta = t.put(p.ln_beta);
    v.in_ssm_w = t.put(p.in_ssm_w);
    v.in_ssm_b = t.put(p.in_ssm_b);
    v.in_gate_w = t.put(p.in_gate_w);
    v.in_gate_b = t.put(p.in_gate_b);
    v.dw_kernel = t.put(p.dw_kernel);
    v.dw_bias = t.put(p.dw_bias);
    v.ssm = bind(t, p.ssm);
    v.out_w = t.put(p.out_w);
    v.out_b = t.put(p.out_b);
    return v;
}

void visit_params(MambaBlockParams& p, const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".ln.gamma", p.ln_gamma);
    fn(prefix + ".ln.beta", p.ln_beta);
    fn(prefix + ".in_ssm.W", p.in_ssm_w);
    fn(prefix + ".in_ssm.b", p.in_ssm_b);
    fn(prefix + ".in_gate.W", p.in_gate_w);
    fn(prefix + ".in_gate.b", p.in_gate_b);
    fn(prefix + ".dw.kernel", p.dw_kernel);
    fn(prefix + ".dw.bias", p.dw_bias);
    visit_params(p.ssm, prefix + ".ssm", fn);
    fn(prefix + ".out_proj.W", p.out_w);
    fn(prefix + ".out_proj.b", p.out_b);
}

MambaResult mamba_block(Tape& t, Val m_prev, const MambaBlockVals& p, Val h0,
                        const MambaConfig& cfg) {
    const Tensor& x = t.value(m_prev);
    const std::int64_t d = t.value(p.ln_gamma).extent(0);
    if (x.rank() != 2 || x.extent(1) != d) {
        throw ShapeError("mamba_block: input " + shape_str(x.shape()) + " vs dim " + std::to_string(d));
    }
    Val xn = layer_norm(t, m_prev, p.ln_gamma, p.ln_beta, cfg.ln_eps);
    Val ssm_in = silu(t, depthwise_conv1d_causal(t, linear(t, xn, p.in_ssm_w, p.in_ssm_b),
                                                 p.dw_kernel, p.dw_bias));
    Val gate = silu(t, linear(t, xn, p.in_gate_w, p.in_gate_b));
    ScanResult scan = selective_scan_sequential(t, ssm_in, p.ssm, h0);
    Val gated = mul(t, linear(t, scan.y, p.out_w, p.out_b), gate);
    Val residual = cfg.residual_to_normalized ? xn : m_prev;
    return MambaResult{add(t, gated, residual), scan.h_final};
}

}  // namespace swm
