#include "swm/injector.hpp"

#include <cmath>

namespace swm {

namespace {

Tensor normal_init(Rng& rng, Shape shape, real stddev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(rng.normal(0.0, stddev));
    return t;
}

ZeroConvBranch init_branch(const InjectorConfig& cfg, Rng& rng) {
    const std::int64_t d = cfg.dim;
    const std::int64_t mid = cfg.mid > 0 ? cfg.mid : cfg.dim;
    ZeroConvBranch b;
    if (cfg.random_output_init) {
        // ablation arm: the branch becomes a plain randomly initialized
        // projection, standard scale throughout
        const real w2_std = cfg.w2_std > 0 ? cfg.w2_std : real(1) / std::sqrt(real(mid));
        b.w1 = normal_init(rng, {d, mid}, real(1) / std::sqrt(real(d)));
        b.b1 = normal_init(rng, {mid}, real(1) / std::sqrt(real(d)));
        b.w2 = normal_init(rng, {mid, d}, w2_std);
        b.b2 = normal_init(rng, {d}, w2_std);
    } else {
        b.w1 = normal_init(rng, {d, mid}, cfg.w1_std);
        b.b1 = normal_init(rng, {mid}, cfg.w1_std);
        b.w2 = Tensor::zeros({mid, d});
        b.b2 = Tensor::zeros({d});
    }
    return b;
}

}  // namespace

InjectorParams InjectorParams::init(std::int64_t n_layers, const InjectorConfig& cfg, Rng& rng) {
    if (n_layers < 0) throw ConfigError("injector: layer count must be non-negative");
    InjectorParams p;
    p.layers.reserve(static_cast<std::size_t>(n_layers));
    for (std::int64_t i = 0; i < n_layers; ++i) {
        p.layers.push_back(InjectorLayerParams{init_branch(cfg, rng), init_branch(cfg, rng)});
    }
    return p;
}

InjectorVals bind(Tape& t, const InjectorParams& p) {
    InjectorVals v;
    v.layers.reserve(p.layers.size());
    for (const auto& layer : p.layers) {
        InjectorLayerVals lv;
        lv.k_branch = ZeroConvVals{t.put(layer.k_branch.w1), t.put(layer.k_branch.b1),
                                   t.put(layer.k_branch.w2), t.put(layer.k_branch.b2)};
        lv.v_branch = ZeroConvVals{t.put(layer.v_branch.w1), t.put(layer.v_branch.b1),
                                   t.put(layer.v_branch.w2), t.put(layer.v_branch.b2)};
        v.layers.push_back(lv);
    }
    return v;
}

void visit_params(InjectorParams& p, const std::string& prefix, const ParamVisitor& fn) {
    for (std::size_t i = 0; i < p.layers.size(); ++i) {
        const std::string base = prefix + ".layer" + std::to_string(i);
        auto visit_branch = [&fn](const std::string& name, ZeroConvBranch& b) {
            fn(name + ".W1", b.w1);
            fn(name + ".b1", b.b1);
            fn(name + ".W2", b.w2);
            fn(name + ".b2", b.b2);
        };
        visit_branch(base + ".K", p.layers[i].k_branch);
        visit_branch(base + ".V", p.layers[i].v_branch);
    }
}

Val zero_conv_branch(Tape& t, Val x, const ZeroConvVals& branch) {
    return linear(t, gelu(t, linear(t, x, branch.w1, branch.b1)), branch.w2, branch.b2);
}

std::pair<Val, Val> inject_kv(Tape& t, Val k, Val v, Val k_hat, Val v_hat,
                              const InjectorLayerVals& params) {
    const Tensor& kv = t.value(k);
    if (!kv.same_shape(t.value(k_hat)) || !t.value(v).same_shape(t.value(v_hat))) {
        throw AlignmentError("inject_kv: memory tokens " + shape_str(t.value(k_hat).shape()) +
                             " not aligned with backbone KV " + shape_str(kv.shape()));
    }
    Val k_prime = add(t, k, zero_conv_branch(t, k_hat, params.k_branch));
    Val v_prime = add(t, v, zero_conv_branch(t, v_hat, params.v_branch));
    return {k_prime, v_prime};
}

Val attend_with_memory(Tape& t, Val q, Val k_prime, Val v_prime) {
    return softmax_attention(t, q, k_prime, v_prime);
}

}  // namespace swm
