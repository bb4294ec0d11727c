#include "swm/checks.hpp"

#include <algorithm>
#include <functional>
#include <memory>

#include "swm/backbone.hpp"
#include "swm/gradcheck.hpp"
#include "swm/injector.hpp"
#include "swm/pipeline.hpp"
#include "swm/scene.hpp"
#include "swm/ssm.hpp"
#include "swm/tensor_ops.hpp"

namespace swm {

namespace {

Tensor rand_t(Rng& rng, Shape shape, real lo = real(-1), real hi = real(1)) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (std::int64_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(rng.uniform(lo, hi));
    return t;
}

struct GradCase {
    std::string name;
    real threshold;
    std::function<std::vector<Tensor>(Rng&)> make_inputs;
    ScalarFn fn;
};

std::vector<GradCase> primitive_grad_cases() {
    std::vector<GradCase> cases;
    auto one = [](Rng& rng) { return std::vector<Tensor>{rand_t(rng, {3, 4})}; };
    auto two = [](Rng& rng) {
        return std::vector<Tensor>{rand_t(rng, {3, 4}), rand_t(rng, {3, 4})};
    };
    auto sq = [](Tape& t, Val v) { return sum(t, mul(t, v, v)); };
    const real tol = real(1e-6);

    cases.push_back({"add", tol, two, [](Tape& t, std::span<const Val> v) {
                         return sum(t, add(t, v[0], v[1]));
                     }});
    cases.push_back({"sub", tol, two, [](Tape& t, std::span<const Val> v) {
                         return sum(t, sub(t, v[0], v[1]));
                     }});
    cases.push_back({"mul", tol, two, [](Tape& t, std::span<const Val> v) {
                         return sum(t, mul(t, mul(t, v[0], v[1]), v[1]));
                     }});
    cases.push_back({"neg", tol, one, [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, neg(t, v[0]));
                     }});
    cases.push_back({"scale", tol, one, [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, scale(t, v[0], real(1.7)));
                     }});
    cases.push_back({"exp", tol, one, [](Tape& t, std::span<const Val> v) {
                         return sum(t, exp(t, v[0]));
                     }});
    cases.push_back({"log", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {3, 4}, real(0.5), real(2))};
                     },
                     [](Tape& t, std::span<const Val> v) { return sum(t, log(t, v[0])); }});
    cases.push_back({"abs", tol, [](Rng& rng) {
                         Tensor x = rand_t(rng, {3, 4}, real(0.2), real(1));
                         for (std::int64_t i = 0; i < x.size(); ++i)
                             if (i % 2) x[i] = -x[i];
                         return std::vector<Tensor>{x};
                     },
                     [](Tape& t, std::span<const Val> v) { return sum(t, abs(t, v[0])); }});
    cases.push_back({"silu", tol, one, [](Tape& t, std::span<const Val> v) {
                         return sum(t, silu(t, v[0]));
                     }});
    cases.push_back({"gelu", tol, one, [](Tape& t, std::span<const Val> v) {
                         return sum(t, gelu(t, v[0]));
                     }});
    cases.push_back({"softplus", tol, one, [](Tape& t, std::span<const Val> v) {
                         return sum(t, softplus(t, v[0]));
                     }});
    cases.push_back({"matmul", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {3, 5}), rand_t(rng, {5, 2})};
                     },
                     [](Tape& t, std::span<const Val> v) { return sum(t, matmul(t, v[0], v[1])); }});
    cases.push_back({"transpose", tol, one, [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, transpose(t, v[0]));
                     }});
    cases.push_back({"add_rowvec", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {3, 4}), rand_t(rng, {4})};
                     },
                     [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, add_rowvec(t, v[0], v[1]));
                     }});
    cases.push_back({"outer", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {3}), rand_t(rng, {5})};
                     },
                     [sq](Tape& t, std::span<const Val> v) { return sq(t, outer(t, v[0], v[1])); }});
    cases.push_back({"matvec", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {3, 5}), rand_t(rng, {5})};
                     },
                     [sq](Tape& t, std::span<const Val> v) { return sq(t, matvec(t, v[0], v[1])); }});
    cases.push_back({"mul_colvec", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {3, 5}), rand_t(rng, {3})};
                     },
                     [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, mul_colvec(t, v[0], v[1]));
                     }});
    cases.push_back({"dot", tol, two, [](Tape& t, std::span<const Val> v) {
                         return dot(t, v[0], v[1]);
                     }});
    cases.push_back({"scale_by", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {3, 4}),
                                                    rand_t(rng, {1}, real(0.5), real(2))};
                     },
                     [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, scale_by(t, v[0], v[1]));
                     }});
    cases.push_back({"rsqrt", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {4}, real(0.5), real(3))};
                     },
                     [](Tape& t, std::span<const Val> v) { return sum(t, rsqrt(t, v[0])); }});
    cases.push_back({"mean", tol, one, [](Tape& t, std::span<const Val> v) {
                         return mean(t, mul(t, v[0], v[0]));
                     }});
    cases.push_back({"sum_rows", tol, one, [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, sum_rows(t, v[0]));
                     }});
    cases.push_back({"mean_rows", tol, one, [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, mean_rows(t, v[0]));
                     }});
    cases.push_back({"concat_rows", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {2, 4}), rand_t(rng, {3, 4})};
                     },
                     [sq](Tape& t, std::span<const Val> v) {
                         std::vector<Val> parts{v[0], v[1]};
                         return sq(t, concat_rows(t, parts));
                     }});
    cases.push_back({"concat_cols", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {3, 2}), rand_t(rng, {3, 4})};
                     },
                     [sq](Tape& t, std::span<const Val> v) {
                         std::vector<Val> parts{v[0], v[1]};
                         return sq(t, concat_cols(t, parts));
                     }});
    cases.push_back({"slice_rows", tol, one, [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, slice_rows(t, v[0], 1, 3));
                     }});
    cases.push_back({"slice_elems", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {7})};
                     },
                     [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, slice_elems(t, v[0], 2, 6));
                     }});
    cases.push_back({"row", tol, one, [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, row(t, v[0], 1));
                     }});
    cases.push_back({"stack_rows", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {4}), rand_t(rng, {4})};
                     },
                     [sq](Tape& t, std::span<const Val> v) {
                         std::vector<Val> rows{v[0], v[1]};
                         return sq(t, stack_rows(t, rows));
                     }});
    cases.push_back({"reshape", tol, one, [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, reshape(t, v[0], {4, 3}));
                     }});
    cases.push_back({"layer_norm", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {3, 6}),
                                                    rand_t(rng, {6}, real(0.5), real(1.5)),
                                                    rand_t(rng, {6})};
                     },
                     [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, layer_norm(t, v[0], v[1], v[2], real(1e-5)));
                     }});
    cases.push_back({"depthwise_conv1d_causal", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {6, 3}), rand_t(rng, {4, 3}),
                                                    rand_t(rng, {3})};
                     },
                     [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, depthwise_conv1d_causal(t, v[0], v[1], v[2]));
                     }});
    cases.push_back({"softmax_rows", tol, one, [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, softmax_rows(t, v[0]));
                     }});
    cases.push_back({"linear", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {3, 5}), rand_t(rng, {5, 4}),
                                                    rand_t(rng, {4})};
                     },
                     [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, linear(t, v[0], v[1], v[2]));
                     }});
    cases.push_back({"softmax_attention", tol, [](Rng& rng) {
                         return std::vector<Tensor>{rand_t(rng, {3, 4}), rand_t(rng, {5, 4}),
                                                    rand_t(rng, {5, 6})};
                     },
                     [sq](Tape& t, std::span<const Val> v) {
                         return sq(t, softmax_attention(t, v[0], v[1], v[2]));
                     }});
    return cases;
}

GradCase mamba_grad_case() {
    MambaConfig cfg;
    cfg.n_state = 3;
    return {"mamba_block", real(1e-4),
            [cfg](Rng& rng) {
                MambaBlockParams p = MambaBlockParams::init(4, cfg, rng);
                std::vector<Tensor> inputs{rand_t(rng, {4, 4}),
                                           p.ln_gamma, p.ln_beta,
                                           p.in_ssm_w, p.in_ssm_b,
                                           p.in_gate_w, p.in_gate_b,
                                           p.dw_kernel, p.dw_bias,
                                           p.ssm.a_log,
                                           p.ssm.b_proj_w, p.ssm.b_proj_b,
                                           p.ssm.c_proj_w, p.ssm.c_proj_b,
                                           p.ssm.delta_proj_w, p.ssm.delta_proj_b,
                                           p.ssm.d_skip, p.out_w, p.out_b,
                                           Tensor::zeros({p.d_inner(), cfg.n_state})};
                return inputs;
            },
            [cfg](Tape& t, std::span<const Val> v) {
                MambaBlockVals pv;
                pv.ln_gamma = v[1];
                pv.ln_beta = v[2];
                pv.in_ssm_w = v[3];
                pv.in_ssm_b = v[4];
                pv.in_gate_w = v[5];
                pv.in_gate_b = v[6];
                pv.dw_kernel = v[7];
                pv.dw_bias = v[8];
                pv.ssm = SsmVals{v[9], v[10], v[11], v[12], v[13], v[14], v[15], v[16]};
                pv.out_w = v[17];
                pv.out_b = v[18];
                MambaResult r = mamba_block(t, v[0], pv, v[19], cfg);
                return sum(t, mul(t, r.features, r.features));
            }};
}

GradCase inject_attend_grad_case() {
    return {"inject_kv+attention", real(1e-4),
            [](Rng& rng) {
                InjectorConfig icfg;
                icfg.dim = 3;
                icfg.random_output_init = true;
                InjectorParams p = InjectorParams::init(1, icfg, rng);
                return std::vector<Tensor>{rand_t(rng, {2, 3}), rand_t(rng, {3, 3}),
                                           rand_t(rng, {3, 3}), rand_t(rng, {3, 3}),
                                           rand_t(rng, {3, 3}),
                                           p.layers[0].k_branch.w1, p.layers[0].k_branch.b1,
                                           p.layers[0].k_branch.w2, p.layers[0].k_branch.b2,
                                           p.layers[0].v_branch.w1, p.layers[0].v_branch.b1,
                                           p.layers[0].v_branch.w2, p.layers[0].v_branch.b2};
            },
            [](Tape& t, std::span<const Val> v) {
                InjectorLayerVals lv;
                lv.k_branch = ZeroConvVals{v[5], v[6], v[7], v[8]};
                lv.v_branch = ZeroConvVals{v[9], v[10], v[11], v[12]};
                auto [kp, vp] = inject_kv(t, v[1], v[2], v[3], v[4], lv);
                Val out = attend_with_memory(t, v[0], kp, vp);
                return sum(t, mul(t, out, out));
            }};
}

GradCase heads_grad_case() {
    BackboneConfig cfg;
    cfg.dim = 8;
    cfg.blocks = 1;
    cfg.heads = 2;
    cfg.patch = 2;
    cfg.channels = 1;
    return {"heads", real(1e-4),
            [cfg](Rng& rng) {
                BackboneParams p = BackboneParams::init(cfg, rng);
                return std::vector<Tensor>{rand_t(rng, {4, cfg.dim}),
                                           p.heads.pointmap_w, p.heads.pointmap_b,
                                           p.heads.depth_w,    p.heads.depth_b,
                                           p.heads.pose_w,     p.heads.pose_b};
            },
            [](Tape& t, std::span<const Val> v) {
                HeadVals hv{v[1], v[2], v[3], v[4], v[5], v[6]};
                auto preds = heads(t, v[0], 1, 2, 2, hv);
                Val acc = sum(t, mul(t, preds[0].pointmap, preds[0].pointmap));
                acc = add(t, acc, sum(t, mul(t, preds[0].depth, preds[0].depth)));
                acc = add(t, acc, sum(t, mul(t, preds[0].quat, preds[0].quat)));
                acc = add(t, acc, sum(t, mul(t, preds[0].trans, preds[0].trans)));
                return acc;
            }};
}

GradCase loss_grad_case() {
    SceneConfig scfg;
    scfg.n_frames = 1;
    scfg.profile = MotionProfile::Loop;
    scfg.frame_size = 28;
    scfg.patch = 14;
    // ground truth is a fixed constant of the map; only the predictions
    // are inputs to differentiate
    auto scene = std::make_shared<SyntheticScene>(gen_scene(404, scfg));
    return {"multi_task_loss", real(1e-4),
            [scene](Rng& rng) {
                const auto& g = scene->gt[0];
                std::vector<Tensor> inputs{
                    ops::add(g.pointmap, rand_t(rng, g.pointmap.shape(), real(-0.1), real(0.1))),
                    ops::add(g.depth, rand_t(rng, g.depth.shape(), real(0.01), real(0.2))),
                    rand_t(rng, {4}, real(0.2), real(1)),
                    ops::add(g.trans, rand_t(rng, {3}, real(-0.2), real(0.2)))};
                return inputs;
            },
            [scene](Tape& t, std::span<const Val> v) {
                FramePredictionVals p;
                p.pointmap = v[0];
                p.depth = v[1];
                p.quat = scale_by(t, v[2], rsqrt(t, dot(t, v[2], v[2])));
                p.trans = v[3];
                std::vector<FramePredictionVals> preds{p};
                std::vector<GroundTruthFrame> gt{scene->gt[0]};
                return multi_task_loss(t, preds, gt).total;
            }};
}

CheckReport run_grad_case(const GradCase& c, int seeds) {
    CheckReport report{c.name, 0, c.threshold, false};
    for (int s = 0; s < seeds; ++s) {
        Rng rng(static_cast<std::uint64_t>(s) * 6151 + 7);
        auto inputs = c.make_inputs(rng);
        report.value = std::max(report.value, check_gradient(c.fn, inputs));
    }
    report.pass = report.value <= report.threshold;
    return report;
}

}  // namespace

std::vector<CheckReport> run_gradient_checks(int seeds_per_case) {
    std::vector<CheckReport> reports;
    for (const auto& c : primitive_grad_cases()) reports.push_back(run_grad_case(c, seeds_per_case));
    reports.push_back(run_grad_case(mamba_grad_case(), seeds_per_case));
    reports.push_back(run_grad_case(inject_attend_grad_case(), seeds_per_case));
    reports.push_back(run_grad_case(heads_grad_case(), seeds_per_case));
    reports.push_back(run_grad_case(loss_grad_case(), seeds_per_case));
    return reports;
}

std::vector<CheckReport> run_scan_checks(int instances) {
    CheckReport chunked{"chunked-vs-sequential", 0, real(1e-10), false};
    CheckReport carry{"split-concat-state-carrying", 0, real(0), false};
    for (int i = 0; i < instances; ++i) {
        Rng rng(static_cast<std::uint64_t>(i) * 2797 + 13);
        const std::int64_t s = 2 + static_cast<std::int64_t>(rng.below(63));
        const std::int64_t d = 1 + static_cast<std::int64_t>(rng.below(6));
        const std::int64_t n = 1 + static_cast<std::int64_t>(rng.below(5));
        const std::int64_t chunk = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(s)));
        SsmParams p = SsmParams::init(d, n, rng);
        for (std::int64_t j = 0; j < p.b_proj_b.size(); ++j) {
            p.b_proj_b[j] = static_cast<real>(rng.normal(0.0, 0.3));
        }
        Tape t;
        SsmVals pv = bind(t, p);
        Val u = t.put(rand_t(rng, {s, d}));
        Val h0 = t.put(rand_t(rng, {d, n}));
        ScanResult seq = selective_scan_sequential(t, u, pv, h0);
        ScanResult chk = selective_scan_chunked(t, u, pv, h0, chunk);
        chunked.value = std::max(chunked.value, ops::max_abs_diff(t.value(seq.y), t.value(chk.y)));
        chunked.value =
            std::max(chunked.value, ops::max_abs_diff(t.value(seq.h_final), t.value(chk.h_final)));

        // sequential split/concat must be exact
        const std::int64_t cut = 1 + static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(s - 1)));
        ScanResult first = selective_scan_sequential(t, slice_rows(t, u, 0, cut), pv, h0);
        ScanResult second = selective_scan_sequential(t, slice_rows(t, u, cut, s), pv, first.h_final);
        std::vector<Val> ys{first.y, second.y};
        carry.value = std::max(carry.value,
                               ops::max_abs_diff(t.value(concat_rows(t, ys)), t.value(seq.y)));
        carry.value = std::max(
            carry.value, ops::max_abs_diff(t.value(second.h_final), t.value(seq.h_final)));
    }
    chunked.pass = chunked.value <= chunked.threshold;
    carry.pass = carry.value <= carry.threshold;
    return {chunked, carry};
}

bool all_pass(const std::vector<CheckReport>& reports) {
    return std::all_of(reports.begin(), reports.end(),
                       [](const CheckReport& r) { return r.pass; });
}

}  // namespace swm
