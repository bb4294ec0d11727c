#include "swm/train.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include <json.hpp>

namespace swm {

TrainableFlags::TrainableFlags() {
    groups_ = {{kGroupBackbone, true}, {kGroupMambaK, true}, {kGroupMambaV, true},
               {kGroupInjector, true}};
}

void TrainableFlags::set(const std::string& group, bool trainable) {
    auto it = groups_.find(group);
    if (it == groups_.end()) throw ConfigError("set_trainable: unknown group '" + group + "'");
    it->second = trainable;
}

bool TrainableFlags::trainable(const std::string& param_name) const {
    std::size_t best_len = 0;
    bool best = true;
    for (const auto& [prefix, flag] : groups_) {
        if (param_name.rfind(prefix, 0) == 0 && prefix.size() > best_len) {
            best_len = prefix.size();
            best = flag;
        }
    }
    return best;
}

TrainableFlags TrainableFlags::stage1() {
    TrainableFlags f;
    f.set(kGroupBackbone, false);
    return f;
}

TrainableFlags TrainableFlags::all() { return TrainableFlags(); }

AdamW::AdamW(real lr, real weight_decay, real beta1, real beta2, real eps)
    : lr_(lr), weight_decay_(weight_decay), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamW::step_param(const std::string& name, Tensor& value, const Tensor& grad) {
    auto [it, inserted] = moments_.try_emplace(name);
    if (inserted) {
        it->second.m = Tensor::zeros(value.shape());
        it->second.v = Tensor::zeros(value.shape());
    }
    Tensor& m = it->second.m;
    Tensor& v = it->second.v;
    const real bc1 = real(1) - std::pow(beta1_, real(step_));
    const real bc2 = real(1) - std::pow(beta2_, real(step_));
    for (std::int64_t i = 0; i < value.size(); ++i) {
        const real g = grad[i];
        m[i] = beta1_ * m[i] + (real(1) - beta1_) * g;
        v[i] = beta2_ * v[i] + (real(1) - beta2_) * g * g;
        const real mhat = m[i] / bc1;
        const real vhat = v[i] / bc2;
        value[i] -= lr_ * (mhat / (std::sqrt(vhat) + eps_) + weight_decay_ * value[i]);
    }
}

std::string MetricsRow::to_json_line() const {
    nlohmann::json j;
    j["step"] = step;
    j["loss_total"] = static_cast<double>(loss_total);
    j["loss_depth"] = static_cast<double>(loss_depth);
    j["loss_pointmap"] = static_cast<double>(loss_pointmap);
    j["loss_camera"] = static_cast<double>(loss_camera);
    return j.dump();
}

namespace {

// Mirror of Model::visit_params over the bound handles. Pairing with the
// named tensors is verified at runtime (see train_step).
void visit_vals(const ModelVals& mv, const Model& m, const std::function<void(Val)>& fn) {
    auto affine = [&fn](Val w, Val b) {
        fn(w);
        fn(b);
    };
    fn(mv.backbone.embed_w);
    fn(mv.backbone.embed_b);
    for (const auto& b : mv.backbone.blocks) {
        affine(b.ln1_g, b.ln1_b);
        affine(b.wq, b.bq);
        affine(b.wk, b.bk);
        affine(b.wv, b.bv);
        affine(b.wo, b.bo);
        affine(b.ln2_g, b.ln2_b);
        affine(b.mlp_w1, b.mlp_b1);
        affine(b.mlp_w2, b.mlp_b2);
    }
    affine(mv.backbone.heads.pointmap_w, mv.backbone.heads.pointmap_b);
    affine(mv.backbone.heads.depth_w, mv.backbone.heads.depth_b);
    affine(mv.backbone.heads.pose_w, mv.backbone.heads.pose_b);

    auto mamba = [&](const MambaBlockVals& mb) {
        affine(mb.ln_gamma, mb.ln_beta);
        affine(mb.in_ssm_w, mb.in_ssm_b);
        affine(mb.in_gate_w, mb.in_gate_b);
        affine(mb.dw_kernel, mb.dw_bias);
        fn(mb.ssm.a_log);
        affine(mb.ssm.b_proj_w, mb.ssm.b_proj_b);
        affine(mb.ssm.c_proj_w, mb.ssm.c_proj_b);
        affine(mb.ssm.delta_proj_w, mb.ssm.delta_proj_b);
        fn(mb.ssm.d_skip);
        affine(mb.out_w, mb.out_b);
    };
    mamba(mv.mamba_k);
    if (!m.run.share_stream_params) mamba(mv.mamba_v);

    for (const auto& layer : mv.injector.layers) {
        for (const auto* br : {&layer.k_branch, &layer.v_branch}) {
            affine(br->w1, br->b1);
            affine(br->w2, br->b2);
        }
    }
}

std::int64_t frames_for_windows(const RunConfig& cfg, std::int64_t n_windows) {
    return (n_windows - 1) * cfg.stride + cfg.L;
}

}  // namespace

MetricsRow train_step(Model& m, const SyntheticScene& scene, std::int64_t n_windows,
                      const TrainableFlags& flags, AdamW& opt, std::int64_t step_index) {
    const std::int64_t frames_needed =
        std::min(frames_for_windows(m.run, n_windows),
                 static_cast<std::int64_t>(scene.frames.size()));
    WindowSchedule sched = make_windows(frames_needed, m.run.L, m.run.stride);

    Tape tape;
    ModelVals mv = bind(tape, m);
    PipelineStream stream(m);

    Val loss_total, loss_depth, loss_pm, loss_cam;
    bool first = true;
    for (const auto& w : sched.windows) {
        WindowResult r = stream.step_window(
            tape,
            std::span<const Frame>(scene.frames.data() + w.begin,
                                   static_cast<std::size_t>(w.size())),
            mv);
        std::span<const GroundTruthFrame> gt(scene.gt.data() + w.begin,
                                             static_cast<std::size_t>(w.size()));
        LossTerms terms = multi_task_loss(tape, r.predictions, gt);
        if (first) {
            loss_total = terms.total;
            loss_depth = terms.depth;
            loss_pm = terms.pointmap;
            loss_cam = terms.camera;
            first = false;
        } else {
            loss_total = add(tape, loss_total, terms.total);
            loss_depth = add(tape, loss_depth, terms.depth);
            loss_pm = add(tape, loss_pm, terms.pointmap);
            loss_cam = add(tape, loss_cam, terms.camera);
        }
    }
    const real inv_w = real(1) / real(sched.windows.size());
    loss_total = scale(tape, loss_total, inv_w);

    MetricsRow row;
    row.step = step_index;
    row.loss_total = tape.value(loss_total)[0];
    row.loss_depth = tape.value(loss_depth)[0] * inv_w;
    row.loss_pointmap = tape.value(loss_pm)[0] * inv_w;
    row.loss_camera = tape.value(loss_cam)[0] * inv_w;
    if (!std::isfinite(row.loss_total)) {
        throw NumericError("training diverged: non-finite loss at step " +
                           std::to_string(step_index));
    }

    tape.backward(loss_total);

    // pair names with bound handles; the orders mirror by construction
    // and the shapes are cross-checked here
    std::vector<std::pair<std::string, Tensor*>> named;
    m.visit_params([&named](const std::string& name, Tensor& v) { named.emplace_back(name, &v); });
    std::vector<Val> vals;
    visit_vals(mv, m, [&vals](Val v) { vals.push_back(v); });
    if (named.size() != vals.size()) throw StateError("train: parameter enumeration drifted");

    for (std::size_t i = 0; i < named.size(); ++i) {
        if (tape.value(vals[i]).shape() != named[i].second->shape()) {
            throw StateError("train: parameter pairing drifted at " + named[i].first);
        }
        if (!flags.trainable(named[i].first)) continue;
        opt.step_param(named[i].first, *named[i].second, tape.grad(vals[i]));
    }
    opt.next_step();
    return row;
}

TrainResult train(Model& m, const std::vector<SyntheticScene>& scenes, std::ostream* log) {
    if (scenes.empty()) throw ConfigError("train: empty dataset");
    TrainResult result;
    result.backbone_hash_before = m.group_hash(kGroupBackbone);

    AdamW opt(m.run.lr_stage1, m.run.weight_decay);
    TrainableFlags stage1 = TrainableFlags::stage1();
    std::int64_t step = 0;
    auto emit = [&](const MetricsRow& row) {
        result.metrics.push_back(row);
        if (log) (*log) << row.to_json_line() << "\n";
        if (result.metrics.size() == 1) result.first_loss = row.loss_total;
        result.last_loss = row.loss_total;
    };

    for (std::int64_t i = 0; i < m.run.stage1_steps; ++i, ++step) {
        const auto& scene = scenes[static_cast<std::size_t>(step) % scenes.size()];
        emit(train_step(m, scene, m.run.seq_windows, stage1, opt, step));
    }
    result.backbone_hash_after_stage1 = m.group_hash(kGroupBackbone);
    if (result.backbone_hash_after_stage1 != result.backbone_hash_before) {
        throw StateError("stage 1 froze the backbone but its parameters changed");
    }

    if (m.run.stage2_steps > 0) {
        opt.set_lr(m.run.lr_stage2);
        TrainableFlags all = TrainableFlags::all();
        const auto& ladder =
            m.run.stage2_ladder.empty() ? std::vector<std::int64_t>{m.run.seq_windows}
                                        : m.run.stage2_ladder;
        const std::int64_t per_rung = m.run.stage2_steps / static_cast<std::int64_t>(ladder.size());
        std::int64_t remaining = m.run.stage2_steps;
        for (std::size_t rung = 0; rung < ladder.size(); ++rung) {
            const std::int64_t steps_here =
                rung + 1 == ladder.size() ? remaining : std::min(per_rung, remaining);
            for (std::int64_t i = 0; i < steps_here; ++i, ++step) {
                const auto& scene = scenes[static_cast<std::size_t>(step) % scenes.size()];
                emit(train_step(m, scene, ladder[rung], all, opt, step));
            }
            remaining -= steps_here;
        }
    }
    return result;
}

void save_checkpoint(Model& m, const std::filesystem::path& dir, const TrainResult& result) {
    std::filesystem::create_directories(dir);
    m.save(dir);
    std::ofstream cfg(dir / "config.txt");
    cfg << config_to_text(m.run);
    nlohmann::json j;
    j["backbone_hash_before"] = io::hash_hex(result.backbone_hash_before);
    j["backbone_hash_after_stage1"] = io::hash_hex(result.backbone_hash_after_stage1);
    j["first_loss"] = static_cast<double>(result.first_loss);
    j["last_loss"] = static_cast<double>(result.last_loss);
    j["steps"] = result.metrics.size();
    std::ofstream meta(dir / "training.json");
    meta << j.dump(2) << "\n";
}

Model load_checkpoint(const std::filesystem::path& dir) {
    RunConfig cfg = parse_config_file(dir / "config.txt");
    Model m = Model::init(cfg);
    m.load(dir);
    return m;
}

DriftReport evaluate_on_scene(Model& m, const SyntheticScene& scene) {
    std::vector<Prediction> preds = run_streaming(m, scene.frames);
    return evaluate_drift(preds, scene.gt);
}

std::vector<SyntheticScene> make_dataset(const RunConfig& cfg) {
    std::int64_t max_windows = cfg.seq_windows;
    for (auto rung : cfg.stage2_ladder) max_windows = std::max(max_windows, rung);
    SceneConfig scfg;
    scfg.n_frames = frames_for_windows(cfg, max_windows);
    scfg.profile = parse_profile(cfg.profile);
    scfg.frame_size = cfg.frame_size;
    scfg.patch = cfg.patch;
    scfg.channels = cfg.channels;
    scfg.noise_std = cfg.scene_noise;
    scfg.texture_period = cfg.texture_period;
    scfg.lattice = cfg.lattice;

    // one underlying geometry per run; each scene is a fresh noise
    // realization of it
    std::vector<SyntheticScene> scenes;
    Rng root(cfg.seed ^ 0x5ce4e5eedULL);
    const std::uint64_t content_seed = root.next_u64();
    for (std::int64_t i = 0; i < cfg.scenes; ++i) {
        scfg.noise_seed = root.next_u64();
        scenes.push_back(gen_scene(content_seed, scfg));
    }
    return scenes;
}

}  // namespace swm
