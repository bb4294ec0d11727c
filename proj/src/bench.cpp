#include "swm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace swm {

namespace o = ops;

BenchConfig BenchConfig::defaults() {
    BenchConfig cfg;
    // lean dims keep the quadratic term visible over linear overheads
    cfg.run.D = 32;
    cfg.run.blocks = 2;
    cfg.run.heads = 2;
    cfg.run.patch = 14;
    cfg.run.frame_size = 56;  // 4x4 patch grid per frame
    cfg.run.n_state = 8;
    cfg.run.T = 4;
    cfg.run.L = 2;
    cfg.run.stride = 2;
    cfg.run.injection_layers = {1};
    return cfg;
}

namespace {

Tensor multi_head_attention_blocked(const Tensor& q, const Tensor& k, const Tensor& v,
                                    std::int64_t heads, std::int64_t block_rows) {
    const std::int64_t s = q.extent(0), d = q.extent(1);
    const std::int64_t dh = d / heads;
    Tensor out = Tensor::zeros({s, d});
    for (std::int64_t hh = 0; hh < heads; ++hh) {
        auto head_slice = [&](const Tensor& m) {
            Tensor part = Tensor::zeros({m.extent(0), dh});
            for (std::int64_t i = 0; i < m.extent(0); ++i)
                for (std::int64_t j = 0; j < dh; ++j) part.at(i, j) = m.at(i, hh * dh + j);
            return part;
        };
        Tensor qh = head_slice(q), kh = head_slice(k), vh = head_slice(v);
        for (std::int64_t r0 = 0; r0 < s; r0 += block_rows) {
            const std::int64_t r1 = std::min(r0 + block_rows, s);
            Tensor q_blk = o::slice_rows(qh, r0, r1);
            Tensor attn = o::matmul(o::softmax_rows(o::scale(o::matmul_nt(q_blk, kh),
                                                             real(1) / std::sqrt(real(dh)))),
                                    vh);
            for (std::int64_t i = r0; i < r1; ++i)
                for (std::int64_t j = 0; j < dh; ++j) out.at(i, hh * dh + j) = attn.at(i - r0, j);
        }
    }
    return out;
}

}  // namespace

std::vector<Prediction> global_attention_forward(const BackboneParams& params,
                                                 std::span<const Frame> frames,
                                                 std::int64_t block_rows) {
    const auto& cfg = params.cfg;
    const std::int64_t n_frames = static_cast<std::int64_t>(frames.size());

    // embed all frames
    std::vector<Tensor> token_parts;
    std::int64_t grid_rows = 0, grid_cols = 0;
    for (const auto& f : frames) {
        Tensor patches = patch_matrix(f.image, cfg.patch);
        grid_rows = f.image.extent(0) / cfg.patch;
        grid_cols = f.image.extent(1) / cfg.patch;
        Tensor tokens = o::add_rowvec(o::matmul(patches, params.embed_w), params.embed_b);
        token_parts.push_back(
            o::add(tokens, position_encoding(grid_rows, grid_cols, cfg.dim)));
    }
    Tensor x = o::concat_rows(token_parts);
    token_parts.clear();

    for (const auto& b : params.blocks) {
        Tensor xn = o::layer_norm(x, b.ln1_g, b.ln1_b, cfg.ln_eps);
        Tensor q = o::add_rowvec(o::matmul(xn, b.wq), b.bq);
        Tensor k = o::add_rowvec(o::matmul(xn, b.wk), b.bk);
        Tensor v = o::add_rowvec(o::matmul(xn, b.wv), b.bv);
        Tensor attn = multi_head_attention_blocked(q, k, v, cfg.heads, block_rows);
        x = o::add(x, o::add_rowvec(o::matmul(attn, b.wo), b.bo));
        Tensor xn2 = o::layer_norm(x, b.ln2_g, b.ln2_b, cfg.ln_eps);
        Tensor hidden = o::gelu(o::add_rowvec(o::matmul(xn2, b.mlp_w1), b.mlp_b1));
        x = o::add(x, o::add_rowvec(o::matmul(hidden, b.mlp_w2), b.mlp_b2));
    }

    const std::int64_t n = grid_rows * grid_cols;
    std::vector<Prediction> out;
    out.reserve(static_cast<std::size_t>(n_frames));
    for (std::int64_t f = 0; f < n_frames; ++f) {
        Tensor chunk = o::slice_rows(x, f * n, (f + 1) * n);
        Prediction pr;
        pr.pointmap = o::add_rowvec(o::matmul(chunk, params.heads.pointmap_w),
                                    params.heads.pointmap_b);
        pr.depth = o::reshape(
            o::softplus(o::add_rowvec(o::matmul(chunk, params.heads.depth_w), params.heads.depth_b)),
            {grid_rows, grid_cols});
        Tensor pooled = o::reshape(o::mean_rows(chunk), {1, cfg.dim});
        Tensor pose = o::reshape(
            o::add_rowvec(o::matmul(pooled, params.heads.pose_w), params.heads.pose_b), {7});
        Tensor quat = o::slice_elems(pose, 0, 4);
        real norm = 0;
        for (std::int64_t i = 0; i < 4; ++i) norm += quat[i] * quat[i];
        pr.quat = o::scale(quat, real(1) / std::sqrt(norm));
        pr.trans = o::slice_elems(pose, 4, 7);
        out.push_back(std::move(pr));
    }
    return out;
}

std::vector<BenchRecord> bench_scaling(const BenchConfig& cfg, std::ostream* progress) {
    for (std::size_t i = 1; i < cfg.frame_counts.size(); ++i) {
        if (cfg.frame_counts[i] <= cfg.frame_counts[i - 1]) {
            throw ConfigError("bench: frame counts must ascend");
        }
    }
    const std::int64_t max_frames = cfg.frame_counts.back();

    SceneConfig scfg;
    scfg.n_frames = max_frames;
    scfg.profile = MotionProfile::Loop;
    scfg.frame_size = cfg.run.frame_size;
    scfg.patch = cfg.run.patch;
    scfg.channels = cfg.run.channels;
    SyntheticScene scene = gen_scene(cfg.seed, scfg);

    std::vector<BenchRecord> records;
    for (const auto& method : cfg.methods) {
        RunConfig rc = cfg.run;
        rc.seed = cfg.seed;
        rc.memory_enabled = method == kMethodMemory;
        Model model = Model::init(rc);

        for (auto count : cfg.frame_counts) {
            std::span<const Frame> frames(scene.frames.data(), static_cast<std::size_t>(count));
            std::vector<double> times;
            std::uint64_t peak_bytes = 0;
            for (int rep = 0; rep < cfg.reps; ++rep) {
                const auto t0 = std::chrono::steady_clock::now();
                if (method == kMethodGlobal) {
                    auto preds = global_attention_forward(model.backbone, frames);
                    peak_bytes = static_cast<std::uint64_t>(count) *
                                 static_cast<std::uint64_t>(model.tokens_per_frame()) *
                                 static_cast<std::uint64_t>(rc.D) * sizeof(real);
                    (void)preds;
                } else {
                    std::size_t retained = 0;
                    auto preds = run_streaming(model, frames, &retained);
                    peak_bytes = retained;
                    (void)preds;
                }
                const auto t1 = std::chrono::steady_clock::now();
                times.push_back(std::chrono::duration<double>(t1 - t0).count());
            }
            std::sort(times.begin(), times.end());
            BenchRecord rec{method, count, times[times.size() / 2], peak_bytes};
            records.push_back(rec);
            if (progress) {
                (*progress) << rec.method << " frames=" << rec.frames << " seconds=" << rec.seconds
                            << " peak_bytes=" << rec.peak_bytes << "\n";
            }
        }
    }
    return records;
}

void write_bench_csv(std::ostream& os, std::span<const BenchRecord> records) {
    os << "method,frames,seconds,peak_bytes\n";
    for (const auto& r : records) {
        os << r.method << "," << r.frames << "," << r.seconds << "," << r.peak_bytes << "\n";
    }
}

double fit_loglog_exponent(std::span<const BenchRecord> records, const std::string& method) {
    std::vector<double> xs, ys;
    for (const auto& r : records) {
        if (r.method != method) continue;
        xs.push_back(std::log(static_cast<double>(r.frames)));
        ys.push_back(std::log(r.seconds));
    }
    if (xs.size() < 2) throw ConfigError("fit: need at least two points for '" + method + "'");
    const double n = static_cast<double>(xs.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sx += xs[i];
        sy += ys[i];
        sxx += xs[i] * xs[i];
        sxy += xs[i] * ys[i];
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

}  // namespace swm
