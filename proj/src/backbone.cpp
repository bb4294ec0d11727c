#include "swm/backbone.hpp"

#include <algorithm>
#include <cmath>

namespace swm {

namespace {

Tensor normal_init(Rng& rng, Shape shape, real stddev) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(rng.normal(0.0, stddev));
    return t;
}

AttentionBlockParams init_block(std::int64_t d, std::int64_t mlp_ratio, Rng& rng) {
    AttentionBlockParams b;
    const real std_d = real(1) / std::sqrt(real(d));
    b.ln1_g = Tensor::full({d}, 1);
    b.ln1_b = Tensor::zeros({d});
    b.wq = normal_init(rng, {d, d}, std_d);
    b.bq = Tensor::zeros({d});
    b.wk = normal_init(rng, {d, d}, std_d);
    b.bk = Tensor::zeros({d});
    b.wv = normal_init(rng, {d, d}, std_d);
    b.bv = Tensor::zeros({d});
    b.wo = normal_init(rng, {d, d}, std_d);
    b.bo = Tensor::zeros({d});
    b.ln2_g = Tensor::full({d}, 1);
    b.ln2_b = Tensor::zeros({d});
    const std::int64_t hidden = mlp_ratio * d;
    b.mlp_w1 = normal_init(rng, {d, hidden}, std_d);
    b.mlp_b1 = Tensor::zeros({hidden});
    b.mlp_w2 = normal_init(rng, {hidden, d}, real(1) / std::sqrt(real(hidden)));
    b.mlp_b2 = Tensor::zeros({d});
    return b;
}

}  // namespace

BackboneParams BackboneParams::init(const BackboneConfig& cfg, Rng& rng) {
    if (cfg.dim % cfg.heads != 0) throw ConfigError("backbone: dim must divide by heads");
    if (cfg.dim % 4 != 0) throw ConfigError("backbone: dim must be a multiple of 4");
    BackboneParams p;
    p.cfg = cfg;
    const std::int64_t patch_len = cfg.patch * cfg.patch * cfg.channels;
    p.embed_w = normal_init(rng, {patch_len, cfg.dim}, real(1) / std::sqrt(real(patch_len)));
    p.embed_b = Tensor::zeros({cfg.dim});
    for (std::int64_t i = 0; i < cfg.blocks; ++i) {
        p.blocks.push_back(init_block(cfg.dim, cfg.mlp_ratio, rng));
    }
    const real std_d = real(1) / std::sqrt(real(cfg.dim));
    p.heads.pointmap_w = normal_init(rng, {cfg.dim, 3}, std_d);
    p.heads.pointmap_b = Tensor::zeros({3});
    p.heads.depth_w = normal_init(rng, {cfg.dim, 1}, std_d);
    p.heads.depth_b = Tensor::zeros({1});
    p.heads.pose_w = normal_init(rng, {cfg.dim, 7}, std_d);
    // identity-bias init: quaternion defaults to (1,0,0,0)
    p.heads.pose_b = Tensor::from_data({7}, {1, 0, 0, 0, 0, 0, 0});
    return p;
}

BackboneVals bind(Tape& t, const BackboneParams& p) {
    BackboneVals v;
    v.embed_w = t.put(p.embed_w);
    v.embed_b = t.put(p.embed_b);
    for (const auto& b : p.blocks) {
        v.blocks.push_back(AttentionBlockVals{
            t.put(b.ln1_g), t.put(b.ln1_b), t.put(b.wq), t.put(b.bq), t.put(b.wk), t.put(b.bk),
            t.put(b.wv), t.put(b.bv), t.put(b.wo), t.put(b.bo), t.put(b.ln2_g), t.put(b.ln2_b),
            t.put(b.mlp_w1), t.put(b.mlp_b1), t.put(b.mlp_w2), t.put(b.mlp_b2)});
    }
    v.heads = HeadVals{t.put(p.heads.pointmap_w), t.put(p.heads.pointmap_b),
                       t.put(p.heads.depth_w),    t.put(p.heads.depth_b),
                       t.put(p.heads.pose_w),     t.put(p.heads.pose_b)};
    return v;
}

void visit_params(BackboneParams& p, const std::string& prefix, const ParamVisitor& fn) {
    fn(prefix + ".embed.W", p.embed_w);
    fn(prefix + ".embed.b", p.embed_b);
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        auto& b = p.blocks[i];
        const std::string base = prefix + ".block" + std::to_string(i);
        fn(base + ".ln1.gamma", b.ln1_g);
        fn(base + ".ln1.beta", b.ln1_b);
        fn(base + ".attn.Wq", b.wq);
        fn(base + ".attn.bq", b.bq);
        fn(base + ".attn.Wk", b.wk);
        fn(base + ".attn.bk", b.bk);
        fn(base + ".attn.Wv", b.wv);
        fn(base + ".attn.bv", b.bv);
        fn(base + ".attn.Wo", b.wo);
        fn(base + ".attn.bo", b.bo);
        fn(base + ".ln2.gamma", b.ln2_g);
        fn(base + ".ln2.beta", b.ln2_b);
        fn(base + ".mlp.W1", b.mlp_w1);
        fn(base + ".mlp.b1", b.mlp_b1);
        fn(base + ".mlp.W2", b.mlp_w2);
        fn(base + ".mlp.b2", b.mlp_b2);
    }
    fn(prefix + ".head.pointmap.W", p.heads.pointmap_w);
    fn(prefix + ".head.pointmap.b", p.heads.pointmap_b);
    fn(prefix + ".head.depth.W", p.heads.depth_w);
    fn(prefix + ".head.depth.b", p.heads.depth_b);
    fn(prefix + ".head.pose.W", p.heads.pose_w);
    fn(prefix + ".head.pose.b", p.heads.pose_b);
}

Tensor position_encoding(std::int64_t rows, std::int64_t cols, std::int64_t dim) {
    if (dim % 4 != 0) throw ConfigError("position encoding: dim must be a multiple of 4");
    Tensor pe = Tensor::zeros({rows * cols, dim});
    const std::int64_t quarter = dim / 4;
    for (std::int64_t r = 0; r < rows; ++r) {
        for (std::int64_t c = 0; c < cols; ++c) {
            const std::int64_t tok = r * cols + c;
            for (std::int64_t k = 0; k < quarter; ++k) {
                const real w = std::pow(real(10000), -real(k) / real(quarter));
                pe.at(tok, 4 * k + 0) = std::sin(real(r) * w);
                pe.at(tok, 4 * k + 1) = std::cos(real(r) * w);
                pe.at(tok, 4 * k + 2) = std::sin(real(c) * w);
                pe.at(tok, 4 * k + 3) = std::cos(real(c) * w);
            }
        }
    }
    return pe;
}

Tensor patch_matrix(const Tensor& image, std::int64_t patch) {
    require_rank(image, 3, "patch_matrix image");
    const std::int64_t h = image.extent(0);
    const std::int64_t w = image.extent(1);
    const std::int64_t c = image.extent(2);
    if (h % patch != 0 || w % patch != 0) {
        throw ShapeError("patch_matrix: image " + shape_str(image.shape()) +
                         " not divisible by patch " + std::to_string(patch));
    }
    const std::int64_t rows = h / patch, cols = w / patch;
    Tensor patches = Tensor::zeros({rows * cols, patch * patch * c});
    for (std::int64_t pr = 0; pr < rows; ++pr) {
        for (std::int64_t pc = 0; pc < cols; ++pc) {
            const std::int64_t tok = pr * cols + pc;
            std::int64_t off = 0;
            for (std::int64_t y = 0; y < patch; ++y) {
                for (std::int64_t x = 0; x < patch; ++x) {
                    for (std::int64_t ch = 0; ch < c; ++ch) {
                        patches.at(tok, off++) =
                            image[((pr * patch + y) * w + (pc * patch + x)) * c + ch];
                    }
                }
            }
        }
    }
    return patches;
}

PatchTokens patchify(Tape& t, const Frame& frame, const BackboneVals& p,
                     const BackboneConfig& cfg) {
    if (frame.image.rank() == 3 && frame.image.extent(2) != cfg.channels) {
        throw ShapeError("patchify: channels " + std::to_string(frame.image.extent(2)) +
                         " vs config " + std::to_string(cfg.channels));
    }
    Tensor patches = patch_matrix(frame.image, cfg.patch);
    const std::int64_t rows = frame.image.extent(0) / cfg.patch;
    const std::int64_t cols = frame.image.extent(1) / cfg.patch;
    Val embedded = linear(t, t.put(std::move(patches)), p.embed_w, p.embed_b);
    Val tokens = add(t, embedded, t.put(position_encoding(rows, cols, cfg.dim)));
    return PatchTokens{tokens, rows, cols};
}

namespace {

Val multi_head_attention(Tape& t, Val q, Val k, Val v, std::int64_t heads) {
    const std::int64_t d = t.value(q).extent(1);
    const std::int64_t dh = d / heads;
    if (heads == 1) return softmax_attention(t, q, k, v);
    std::vector<Val> outs;
    outs.reserve(static_cast<std::size_t>(heads));
    // per-head column slices via transpose + row slice
    Val qt = transpose(t, q);
    Val kt = transpose(t, k);
    Val vt = transpose(t, v);
    for (std::int64_t hh = 0; hh < heads; ++hh) {
        Val qh = transpose(t, slice_rows(t, qt, hh * dh, (hh + 1) * dh));
        Val kh = transpose(t, slice_rows(t, kt, hh * dh, (hh + 1) * dh));
        Val vh = transpose(t, slice_rows(t, vt, hh * dh, (hh + 1) * dh));
        outs.push_back(softmax_attention(t, qh, kh, vh));
    }
    return concat_cols(t, outs);
}

}  // namespace

Val aggregate(Tape& t, Val tokens, std::int64_t n_frames, const BackboneVals& p,
              const BackboneConfig& cfg, const InjectorHook* hook) {
    const std::int64_t s = t.value(tokens).extent(0);
    if (n_frames < 1 || s % n_frames != 0) {
        throw ShapeError("aggregate: token count " + std::to_string(s) + " vs frames " +
                         std::to_string(n_frames));
    }
    const std::int64_t n_per_frame = s / n_frames;

    const bool hook_active = hook && hook->params && hook->memory && hook->layers;
    Val x = tokens;
    for (std::size_t i = 0; i < p.blocks.size(); ++i) {
        const auto& b = p.blocks[i];
        Val xn = layer_norm(t, x, b.ln1_g, b.ln1_b, cfg.ln_eps);
        Val q = linear(t, xn, b.wq, b.bq);
        Val k = linear(t, xn, b.wk, b.bk);
        Val v = linear(t, xn, b.wv, b.bv);

        std::vector<Val> extra_k, extra_v;
        if (hook_active) {
            auto it = std::find(hook->layers->begin(), hook->layers->end(),
                                static_cast<std::int64_t>(i));
            if (it != hook->layers->end()) {
                const auto slot = static_cast<std::size_t>(it - hook->layers->begin());
                if (slot >= hook->params->layers.size()) {
                    throw ConfigError("aggregate: injected layer without injector params");
                }
                const auto& inj = hook->params->layers[slot];
                const std::int64_t n_mem = t.value(hook->memory->k_hat).extent(0);
                if (n_mem != n_per_frame) {
                    throw AlignmentError("aggregate: memory tokens " + std::to_string(n_mem) +
                                         " per window vs " + std::to_string(n_per_frame) +
                                         " tokens per frame");
                }
                // token-aligned addition: the per-window refinement applies
                // to each frame's patch grid
                std::vector<Val> tiles_k(static_cast<std::size_t>(n_frames), hook->memory->k_hat);
                std::vector<Val> tiles_v(static_cast<std::size_t>(n_frames), hook->memory->v_hat);
                Val k_hat = n_frames == 1 ? hook->memory->k_hat : concat_rows(t, tiles_k);
                Val v_hat = n_frames == 1 ? hook->memory->v_hat : concat_rows(t, tiles_v);
                auto [kp, vp] = inject_kv(t, k, v, k_hat, v_hat, inj);
                k = kp;
                v = vp;
                if (hook->mode == InjectionMode::AppendHistory) {
                    for (std::size_t hidx = 0; hidx < hook->memory->k_hist.size(); ++hidx) {
                        Val hk = hook->memory->k_hist[hidx];
                        Val hv = hook->memory->v_hist[hidx];
                        extra_k.push_back(add(t, hk, zero_conv_branch(t, hk, inj.k_branch)));
                        extra_v.push_back(add(t, hv, zero_conv_branch(t, hv, inj.v_branch)));
                    }
                }
            }
        }
        if (!extra_k.empty()) {
            std::vector<Val> all_k{k};
            std::vector<Val> all_v{v};
            all_k.insert(all_k.end(), extra_k.begin(), extra_k.end());
            all_v.insert(all_v.end(), extra_v.begin(), extra_v.end());
            k = concat_rows(t, all_k);
            v = concat_rows(t, all_v);
        }
        Val attn = multi_head_attention(t, q, k, v, cfg.heads);
        x = add(t, x, linear(t, attn, b.wo, b.bo));
        Val xn2 = layer_norm(t, x, b.ln2_g, b.ln2_b, cfg.ln_eps);
        Val hidden = gelu(t, linear(t, xn2, b.mlp_w1, b.mlp_b1));
        x = add(t, x, linear(t, hidden, b.mlp_w2, b.mlp_b2));
    }
    return x;
}

std::vector<FramePredictionVals> heads(Tape& t, Val features, std::int64_t n_frames,
                                       std::int64_t grid_rows, std::int64_t grid_cols,
                                       const HeadVals& p) {
    const std::int64_t s = t.value(features).extent(0);
    const std::int64_t n = grid_rows * grid_cols;
    if (s != n_frames * n) {
        throw ShapeError("heads: features " + std::to_string(s) + " vs frames*grid " +
                         std::to_string(n_frames * n));
    }
    std::vector<FramePredictionVals> out;
    out.reserve(static_cast<std::size_t>(n_frames));
    for (std::int64_t f = 0; f < n_frames; ++f) {
        Val chunk = slice_rows(t, features, f * n, (f + 1) * n);
        FramePredictionVals pred;
        pred.pointmap = linear(t, chunk, p.pointmap_w, p.pointmap_b);
        pred.depth = reshape(t, softplus(t, linear(t, chunk, p.depth_w, p.depth_b)),
                             {grid_rows, grid_cols});
        Val pooled = reshape(t, mean_rows(t, chunk), {1, t.value(features).extent(1)});
        Val pose = reshape(t, linear(t, pooled, p.pose_w, p.pose_b), {7});
        Val quat_raw = slice_elems(t, pose, 0, 4);
        pred.quat = scale_by(t, quat_raw, rsqrt(t, dot(t, quat_raw, quat_raw)));
        pred.trans = slice_elems(t, pose, 4, 7);
        out.push_back(pred);
    }
    return out;
}

Prediction snapshot(const Tape& t, const FramePredictionVals& v) {
    return Prediction{t.value(v.pointmap), t.value(v.depth), t.value(v.quat), t.value(v.trans)};
}

}  // namespace swm
