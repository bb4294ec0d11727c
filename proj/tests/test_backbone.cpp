#include <doctest.h>

#include <cmath>
#include <vector>

#include "swm/backbone.hpp"
#include "swm/gradcheck.hpp"
#include "swm/tensor_ops.hpp"
#include "test_util.hpp"

using namespace swm;
using test::random_tensor;

namespace o = ops;

namespace {

BackboneConfig tiny_config() {
    BackboneConfig cfg;
    cfg.dim = 8;
    cfg.blocks = 2;
    cfg.heads = 2;
    cfg.patch = 2;
    cfg.channels = 1;
    cfg.mlp_ratio = 2;
    return cfg;
}

Frame make_frame(Rng& rng, std::int64_t h, std::int64_t w, std::int64_t c) {
    Frame f;
    f.image = test::random_tensor(rng, {h, w, c});
    f.intrinsics = {real(20), real(20), real(w) / 2, real(h) / 2};
    return f;
}

// window tokens = concat of per-frame patch tokens
Val window_tokens(Tape& t, const std::vector<Frame>& frames, const BackboneVals& pv,
                  const BackboneConfig& cfg) {
    std::vector<Val> parts;
    for (const auto& f : frames) parts.push_back(patchify(t, f, pv, cfg).tokens);
    return parts.size() == 1 ? parts[0] : concat_rows(t, parts);
}

}  // namespace

TEST_CASE("patchify grid arithmetic") {
    BackboneConfig cfg;
    cfg.dim = 16;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.patch = 14;
    cfg.channels = 3;
    Rng rng(1);
    BackboneParams p = BackboneParams::init(cfg, rng);
    Tape t;
    BackboneVals pv = bind(t, p);

    Frame f28 = make_frame(rng, 28, 28, 3);
    PatchTokens tok = patchify(t, f28, pv, cfg);
    CHECK(tok.rows == 2);
    CHECK(tok.cols == 2);
    CHECK(t.value(tok.tokens).shape() == Shape{4, 16});

    Frame f196 = make_frame(rng, 196, 196, 3);
    PatchTokens tok2 = patchify(t, f196, pv, cfg);
    CHECK(tok2.rows * tok2.cols == 196);

    Frame bad = make_frame(rng, 30, 28, 3);
    CHECK_THROWS_AS(patchify(t, bad, pv, cfg), ShapeError);
}

TEST_CASE("zero image with zero embed bias leaves only the position encoding") {
    BackboneConfig cfg = tiny_config();
    Rng rng(2);
    BackboneParams p = BackboneParams::init(cfg, rng);
    p.embed_b = Tensor::zeros(p.embed_b.shape());
    Tape t;
    BackboneVals pv = bind(t, p);
    Frame f;
    f.image = Tensor::zeros({4, 4, 1});
    PatchTokens tok = patchify(t, f, pv, cfg);
    Tensor pe = position_encoding(2, 2, cfg.dim);
    CHECK(o::max_abs_diff(t.value(tok.tokens), pe) == real(0));
}

TEST_CASE("aggregate with an absent hook equals aggregate with a zero-init hook") {
    BackboneConfig cfg = tiny_config();
    Rng rng(3);
    BackboneParams p = BackboneParams::init(cfg, rng);
    InjectorConfig icfg;
    icfg.dim = cfg.dim;
    InjectorParams inj = InjectorParams::init(2, icfg, rng);
    std::vector<std::int64_t> layers{0, 1};

    Tape t;
    BackboneVals pv = bind(t, p);
    InjectorVals iv = bind(t, inj);
    std::vector<Frame> frames{make_frame(rng, 4, 4, 1), make_frame(rng, 4, 4, 1)};
    Val tokens = window_tokens(t, frames, pv, cfg);

    Val bare = aggregate(t, tokens, 2, pv, cfg, nullptr);

    MemoryInjection mem;
    mem.k_hat = t.put(random_tensor(rng, {4, cfg.dim}));
    mem.v_hat = t.put(random_tensor(rng, {4, cfg.dim}));
    InjectorHook hook{&iv, &mem, &layers, InjectionMode::TrailingSlice};
    Val hooked = aggregate(t, tokens, 2, pv, cfg, &hook);

    CHECK(o::max_abs_diff(t.value(bare), t.value(hooked)) == real(0));
}

TEST_CASE("single-frame single-block aggregate matches a hand-composed oracle") {
    BackboneConfig cfg = tiny_config();
    cfg.blocks = 1;
    Rng rng(4);
    BackboneParams p = BackboneParams::init(cfg, rng);
    Tape t;
    BackboneVals pv = bind(t, p);
    Frame f = make_frame(rng, 4, 4, 1);
    PatchTokens tok = patchify(t, f, pv, cfg);
    Val out = aggregate(t, tok.tokens, 1, pv, cfg);

    // oracle with plain kernels, including the 2-head split
    const auto& b = p.blocks[0];
    Tensor x = t.value(tok.tokens);
    Tensor xn = o::layer_norm(x, b.ln1_g, b.ln1_b, cfg.ln_eps);
    Tensor q = o::add_rowvec(o::matmul(xn, b.wq), b.bq);
    Tensor k = o::add_rowvec(o::matmul(xn, b.wk), b.bk);
    Tensor v = o::add_rowvec(o::matmul(xn, b.wv), b.bv);
    const std::int64_t dh = cfg.dim / cfg.heads;
    std::vector<Tensor> head_outs;
    for (std::int64_t hh = 0; hh < cfg.heads; ++hh) {
        auto take = [&](const Tensor& m) {
            Tensor part = Tensor::zeros({m.extent(0), dh});
            for (std::int64_t i = 0; i < m.extent(0); ++i)
                for (std::int64_t j = 0; j < dh; ++j) part.at(i, j) = m.at(i, hh * dh + j);
            return part;
        };
        head_outs.push_back(o::softmax_attention(take(q), take(k), take(v)));
    }
    Tensor attn = o::concat_cols(head_outs);
    Tensor x1 = o::add(x, o::add_rowvec(o::matmul(attn, b.wo), b.bo));
    Tensor xn2 = o::layer_norm(x1, b.ln2_g, b.ln2_b, cfg.ln_eps);
    Tensor mlp = o::add_rowvec(
        o::matmul(o::gelu(o::add_rowvec(o::matmul(xn2, b.mlp_w1), b.mlp_b1)), b.mlp_w2), b.mlp_b2);
    Tensor oracle = o::add(x1, mlp);

    CHECK(o::max_abs_diff(t.value(out), oracle) <= real(1e-12));
}

TEST_CASE("permuting frames permutes per-frame outputs identically") {
    BackboneConfig cfg = tiny_config();
    Rng rng(5);
    BackboneParams p = BackboneParams::init(cfg, rng);
    Tape t;
    BackboneVals pv = bind(t, p);
    std::vector<Frame> frames{make_frame(rng, 4, 4, 1), make_frame(rng, 4, 4, 1),
                              make_frame(rng, 4, 4, 1)};
    std::vector<Frame> permuted{frames[2], frames[0], frames[1]};

    Val out_a = aggregate(t, window_tokens(t, frames, pv, cfg), 3, pv, cfg);
    Val out_b = aggregate(t, window_tokens(t, permuted, pv, cfg), 3, pv, cfg);

    const std::int64_t n = 4;
    // frame i of the original appears at position perm_inv[i] in permuted
    const std::int64_t where[3] = {1, 2, 0};
    for (std::int64_t fi = 0; fi < 3; ++fi) {
        Tensor a = o::slice_rows(t.value(out_a), fi * n, (fi + 1) * n);
        Tensor b = o::slice_rows(t.value(out_b), where[fi] * n, (where[fi] + 1) * n);
        // attention sums reorder across the permutation
        CHECK(o::max_abs_diff(a, b) <= real(1e-12));
    }
}

TEST_CASE("heads on zero features with zero weights give the documented defaults") {
    BackboneConfig cfg = tiny_config();
    Rng rng(6);
    BackboneParams p = BackboneParams::init(cfg, rng);
    p.heads.pointmap_w = Tensor::zeros(p.heads.pointmap_w.shape());
    p.heads.pointmap_b = Tensor::zeros(p.heads.pointmap_b.shape());
    p.heads.depth_w = Tensor::zeros(p.heads.depth_w.shape());
    p.heads.depth_b = Tensor::zeros(p.heads.depth_b.shape());
    p.heads.pose_w = Tensor::zeros(p.heads.pose_w.shape());
    // pose bias keeps its identity init (1,0,0,0, 0,0,0)
    Tape t;
    BackboneVals pv = bind(t, p);
    Val features = t.put(Tensor::zeros({4, cfg.dim}));
    auto preds = heads(t, features, 1, 2, 2, pv.heads);
    REQUIRE(preds.size() == 1);
    CHECK(o::max_abs(t.value(preds[0].pointmap)) == real(0));
    const real sp0 = std::log(real(2));  // softplus(0)
    for (std::int64_t i = 0; i < 4; ++i) {
        CHECK(t.value(preds[0].depth)[i] == doctest::Approx(sp0));
    }
    CHECK(t.value(preds[0].quat)[0] == doctest::Approx(1.0));
    for (int i = 1; i < 4; ++i) CHECK(t.value(preds[0].quat)[i] == doctest::Approx(0.0));
    CHECK(o::max_abs(t.value(preds[0].trans)) == real(0));
}

TEST_CASE("quaternion outputs are unit norm and depth stays positive") {
    BackboneConfig cfg = tiny_config();
    Rng rng(7);
    BackboneParams p = BackboneParams::init(cfg, rng);
    for (int trial = 0; trial < 20; ++trial) {
        Tape t;
        BackboneVals pv = bind(t, p);
        Val features = t.put(random_tensor(rng, {8, cfg.dim}, real(-3), real(3)));
        auto preds = heads(t, features, 2, 2, 2, pv.heads);
        for (const auto& pr : preds) {
            const Tensor& qt = t.value(pr.quat);
            real norm = 0;
            for (std::int64_t i = 0; i < 4; ++i) norm += qt[i] * qt[i];
            CHECK(std::abs(std::sqrt(norm) - real(1)) <= real(1e-9));
            for (std::int64_t i = 0; i < t.value(pr.depth).size(); ++i) {
                CHECK(t.value(pr.depth)[i] > real(0));
            }
        }
    }
}

TEST_CASE("head gradient check") {
    BackboneConfig cfg = tiny_config();
    Rng rng(8);
    BackboneParams p = BackboneParams::init(cfg, rng);
    std::vector<Tensor> inputs{random_tensor(rng, {4, cfg.dim}),
                               p.heads.pointmap_w, p.heads.pointmap_b,
                               p.heads.depth_w,    p.heads.depth_b,
                               p.heads.pose_w,     p.heads.pose_b};
    auto f = [](Tape& t, std::span<const Val> v) {
        HeadVals hv{v[1], v[2], v[3], v[4], v[5], v[6]};
        auto preds = heads(t, v[0], 1, 2, 2, hv);
        Val acc = sum(t, mul(t, preds[0].pointmap, preds[0].pointmap));
        acc = add(t, acc, sum(t, mul(t, preds[0].depth, preds[0].depth)));
        acc = add(t, acc, sum(t, mul(t, preds[0].quat, preds[0].quat)));
        acc = add(t, acc, sum(t, mul(t, preds[0].trans, preds[0].trans)));
        return acc;
    };
    CHECK(check_gradient(f, inputs) <= real(1e-6));
}

TEST_CASE("full toy backbone passes the gradient check end to end") {
    BackboneConfig cfg;
    cfg.dim = 4;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.patch = 2;
    cfg.channels = 1;
    cfg.mlp_ratio = 2;
    Rng rng(9);
    BackboneParams p = BackboneParams::init(cfg, rng);
    Frame f = make_frame(rng, 4, 4, 1);

    std::vector<Tensor> inputs;
    std::vector<std::string> names;
    visit_params(p, "bb", [&](const std::string& name, Tensor& v) {
        names.push_back(name);
        inputs.push_back(v);
    });
    auto rebuild = [&](Tape& t, std::span<const Val> v) {
        BackboneVals pv;
        std::size_t i = 0;
        pv.embed_w = v[i++];
        pv.embed_b = v[i++];
        AttentionBlockVals bv;
        bv.ln1_g = v[i++];
        bv.ln1_b = v[i++];
        bv.wq = v[i++];
        bv.bq = v[i++];
        bv.wk = v[i++];
        bv.bk = v[i++];
        bv.wv = v[i++];
        bv.bv = v[i++];
        bv.wo = v[i++];
        bv.bo = v[i++];
        bv.ln2_g = v[i++];
        bv.ln2_b = v[i++];
        bv.mlp_w1 = v[i++];
        bv.mlp_b1 = v[i++];
        bv.mlp_w2 = v[i++];
        bv.mlp_b2 = v[i++];
        pv.blocks.push_back(bv);
        pv.heads = HeadVals{v[i], v[i + 1], v[i + 2], v[i + 3], v[i + 4], v[i + 5]};
        return pv;
    };
    auto fcheck = [&](Tape& t, std::span<const Val> v) {
        BackboneVals pv = rebuild(t, v);
        PatchTokens tok = patchify(t, f, pv, cfg);
        Val feats = aggregate(t, tok.tokens, 1, pv, cfg);
        auto preds = heads(t, feats, 1, tok.rows, tok.cols, pv.heads);
        Val acc = sum(t, mul(t, preds[0].pointmap, preds[0].pointmap));
        acc = add(t, acc, sum(t, mul(t, preds[0].depth, preds[0].depth)));
        acc = add(t, acc, sum(t, mul(t, preds[0].quat, preds[0].quat)));
        acc = add(t, acc, sum(t, mul(t, preds[0].trans, preds[0].trans)));
        return acc;
    };
    CHECK(check_gradient(fcheck, inputs) <= real(1e-4));
}
