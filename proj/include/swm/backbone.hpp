#pragma once

#include <array>
#include <optional>
#include <vector>

#include "swm/autodiff.hpp"
#include "swm/injector.hpp"
#include "swm/params_visit.hpp"
#include "swm/rng.hpp"

namespace swm {

struct BackboneConfig {
    std::int64_t dim = 64;       // token dimension D
    std::int64_t blocks = 4;     // attention blocks
    std::int64_t heads = 4;
    std::int64_t patch = 14;     // patch side length
    std::int64_t channels = 3;   // frame feature channels
    std::int64_t mlp_ratio = 4;
    real ln_eps = real(1e-5);
};

struct Frame {
    Tensor image;                      // [H, W, C] synthetic feature grid
    std::array<real, 4> intrinsics{};  // fx, fy, cx, cy
    std::int64_t index = 0;            // timestamp
};

struct PatchTokens {
    Val tokens;  // [N, D]
    std::int64_t rows = 0, cols = 0;
};

struct AttentionBlockParams {
    Tensor ln1_g, ln1_b;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b;
    Tensor mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};

struct HeadParams {
    Tensor pointmap_w, pointmap_b;  // D -> 3 world-frame meters
    Tensor depth_w, depth_b;        // D -> 1, softplus keeps depth positive
    Tensor pose_w, pose_b;          // D -> 7 (quat wxyz, translation)
};

struct BackboneParams {
    BackboneConfig cfg;
    Tensor embed_w, embed_b;  // [patch*patch*C, D] / [D]
    std::vector<AttentionBlockParams> blocks;
    HeadParams heads;

    static BackboneParams init(const BackboneConfig& cfg, Rng& rng);
};

struct AttentionBlockVals {
    Val ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo, ln2_g, ln2_b, mlp_w1, mlp_b1, mlp_w2, mlp_b2;
};
struct HeadVals {
    Val pointmap_w, pointmap_b, depth_w, depth_b, pose_w, pose_b;
};
struct BackboneVals {
    Val embed_w, embed_b;
    std::vector<AttentionBlockVals> blocks;
    HeadVals heads;
};

BackboneVals bind(Tape& t, const BackboneParams& p);
void visit_params(BackboneParams& p, const std::string& prefix, const ParamVisitor& fn);

// Fixed sinusoidal 2-D position table, [rows*cols, dim]. dim must be a
// multiple of 4.
Tensor position_encoding(std::int64_t rows, std::int64_t cols, std::int64_t dim);

// Row-per-patch flattening of an [H,W,C] image, [N, patch*patch*C].
Tensor patch_matrix(const Tensor& image, std::int64_t patch);

// Non-overlapping patches, linear embedding, additive position encoding.
PatchTokens patchify(Tape& t, const Frame& frame, const BackboneVals& p, const BackboneConfig& cfg);

enum class InjectionMode { TrailingSlice, AppendHistory };

// Memory payload offered to the KV hook: refined tokens aligned to the
// current window's patch grid, plus optional history rows.
struct MemoryInjection {
    Val k_hat, v_hat;  // [N, D]
    std::vector<Val> k_hist, v_hist;
};

struct InjectorHook {
    const InjectorVals* params = nullptr;
    const MemoryInjection* memory = nullptr;
    const std::vector<std::int64_t>* layers = nullptr;  // injected block indices
    InjectionMode mode = InjectionMode::TrailingSlice;
};

// Joint self-attention over all tokens in the window. When the hook is
// active, designated layers route (K,V) through inject_kv before
// attention.
Val aggregate(Tape& t, Val tokens, std::int64_t n_frames, const BackboneVals& p,
              const BackboneConfig& cfg, const InjectorHook* hook = nullptr);

struct FramePredictionVals {
    Val pointmap;  // [N, 3]
    Val depth;     // [rows, cols], positive
    Val quat;      // [4], unit norm
    Val trans;     // [3]
};

// Plain-tensor snapshot of one frame's predictions.
struct Prediction {
    Tensor pointmap, depth, quat, trans;
};
Prediction snapshot(const Tape& t, const FramePredictionVals& v);

std::vector<FramePredictionVals> heads(Tape& t, Val features, std::int64_t n_frames,
                                       std::int64_t grid_rows, std::int64_t grid_cols,
                                       const HeadVals& p);

}  // namespace swm
