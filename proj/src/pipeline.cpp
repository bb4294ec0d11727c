#include "swm/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "swm/geometry.hpp"

namespace swm {

WindowSchedule make_windows(std::int64_t n_frames, std::int64_t length, std::int64_t stride) {
    if (n_frames < 1) throw ConfigError("make_windows: need at least one frame");
    if (stride < 1) throw ConfigError("make_windows: stride must be >= 1");
    if (stride > length) {
        throw ConfigError("make_windows: stride " + std::to_string(stride) + " > window length " +
                          std::to_string(length) + " leaves coverage gaps");
    }
    WindowSchedule sched;
    sched.length = length;
    sched.stride = stride;
    for (std::int64_t start = 0;; start += stride) {
        WindowRange w{start, std::min(start + length, n_frames)};
        sched.windows.push_back(w);
        if (w.end >= n_frames) break;
    }
    return sched;
}

PipelineStream::PipelineStream(const Model& m) : model_(m), buffer_(m.memory_config()) {}

void PipelineStream::reset() {
    buffer_.reset();
    pending_.reset();
}

namespace {

// Per-window distilled feature on the patch grid: mean over the window's
// frames of each patch slot's token.
Val distill(Tape& t, Val features, std::int64_t n_frames, std::int64_t n_per_frame) {
    Val acc = slice_rows(t, features, 0, n_per_frame);
    for (std::int64_t f = 1; f < n_frames; ++f) {
        acc = add(t, acc, slice_rows(t, features, f * n_per_frame, (f + 1) * n_per_frame));
    }
    return n_frames == 1 ? acc : scale(t, acc, real(1) / real(n_frames));
}

}  // namespace

WindowResult PipelineStream::step_window(Tape& t, std::span<const Frame> frames,
                                         const ModelVals& mv) {
    if (frames.empty()) throw ConfigError("step_window: empty window");
    const auto& cfg = model_.backbone_cfg;
    const std::int64_t n_frames = static_cast<std::int64_t>(frames.size());

    std::vector<Val> token_parts;
    std::int64_t grid_rows = 0, grid_cols = 0;
    for (const auto& f : frames) {
        PatchTokens tok = patchify(t, f, mv.backbone, cfg);
        grid_rows = tok.rows;
        grid_cols = tok.cols;
        token_parts.push_back(tok.tokens);
    }
    Val tokens = token_parts.size() == 1 ? token_parts[0] : concat_rows(t, token_parts);
    const std::int64_t n_per_frame = grid_rows * grid_cols;

    // Inject: memory refined at the previous window feeds this window's
    // designated attention layers.
    InjectorHook hook;
    const bool inject = model_.run.memory_enabled && pending_.has_value() &&
                        !model_.run.injection_layers.empty();
    if (inject) {
        hook.params = &mv.injector;
        hook.memory = &*pending_;
        hook.layers = &model_.run.injection_layers;
        hook.mode = InjectionMode::TrailingSlice;
    }
    Val features = aggregate(t, tokens, n_frames, mv.backbone, cfg, inject ? &hook : nullptr);

    WindowResult result;
    result.predictions = heads(t, features, n_frames, grid_rows, grid_cols, mv.backbone.heads);

    if (model_.run.memory_enabled) {
        // Extract: the window feature comes from the final-block features.
        Val f_t = distill(t, features, n_frames, n_per_frame);

        Val read_k = buffer_.read_out(t, MemoryStream::K, f_t);
        MambaResult ref_k = mamba_block(t, read_k, mv.mamba_k, buffer_.state(t, MemoryStream::K),
                                        model_.mamba_cfg);
        const std::int64_t rows_k = t.value(ref_k.features).extent(0);
        Val k_hat = slice_rows(t, ref_k.features, rows_k - n_per_frame, rows_k);

        Val read_v = buffer_.read_out(t, MemoryStream::V, f_t);
        MambaResult ref_v = mamba_block(t, read_v, mv.mamba_v, buffer_.state(t, MemoryStream::V),
                                        model_.mamba_cfg);
        const std::int64_t rows_v = t.value(ref_v.features).extent(0);
        Val v_hat = slice_rows(t, ref_v.features, rows_v - n_per_frame, rows_v);

        // Update: FIFO push of the refined (alpha-blended) feature.
        if (model_.run.per_frame_entries) {
            for (std::int64_t f = 0; f < n_frames; ++f) {
                Val raw = slice_rows(t, features, f * n_per_frame, (f + 1) * n_per_frame);
                buffer_.update(t, MemoryStream::K, k_hat, raw);
                buffer_.update(t, MemoryStream::V, v_hat, raw);
            }
        } else {
            buffer_.update(t, MemoryStream::K, k_hat, f_t);
            buffer_.update(t, MemoryStream::V, v_hat, f_t);
        }

        // Propagate: carried SSM states for the next window.
        buffer_.propagate(t, ref_k.h_final, ref_v.h_final);
        pending_ = MemoryInjection{k_hat, v_hat, {}, {}};
    }
    return result;
}

void PipelineStream::rebind(const Tape& old_tape, Tape& fresh) {
    buffer_.rebind(old_tape, fresh);
    if (pending_) {
        MemoryInjection moved;
        moved.k_hat = fresh.put(old_tape.value(pending_->k_hat));
        moved.v_hat = fresh.put(old_tape.value(pending_->v_hat));
        for (Val v : pending_->k_hist) moved.k_hist.push_back(fresh.put(old_tape.value(v)));
        for (Val v : pending_->v_hist) moved.v_hist.push_back(fresh.put(old_tape.value(v)));
        pending_ = moved;
    }
}

std::size_t PipelineStream::retained_bytes(const Tape& t) const {
    std::size_t bytes = buffer_.retained_bytes(t);
    if (pending_) {
        bytes += t.value(pending_->k_hat).byte_size() + t.value(pending_->v_hat).byte_size();
        for (Val v : pending_->k_hist) bytes += t.value(v).byte_size();
        for (Val v : pending_->v_hist) bytes += t.value(v).byte_size();
    }
    return bytes;
}

LossTerms multi_task_loss(Tape& t, std::span<const FramePredictionVals> pred,
                          std::span<const GroundTruthFrame> gt) {
    if (pred.size() != gt.size()) {
        throw ShapeError("multi_task_loss: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(gt.size()) + " ground-truth frames");
    }
    if (pred.empty()) throw ShapeError("multi_task_loss: no frames");

    Val depth_acc, pm_acc, cam_acc;
    bool first = true;
    for (std::size_t f = 0; f < pred.size(); ++f) {
        Val d_diff = sub(t, log(t, pred[f].depth), t.put(ops::log(gt[f].depth)));
        Val depth_f = mean(t, mul(t, d_diff, d_diff));

        Val p_diff = sub(t, pred[f].pointmap, t.put(gt[f].pointmap));
        // mean over points of squared Euclidean distance
        Val pm_f = scale(t, sum(t, mul(t, p_diff, p_diff)),
                         real(1) / real(gt[f].pointmap.extent(0)));

        Val t_diff = sub(t, pred[f].trans, t.put(gt[f].trans));
        Val trans_mse = mean(t, mul(t, t_diff, t_diff));
        // |<q_pred, q_gt>| handles the quaternion double cover
        Val qdot = abs(t, dot(t, pred[f].quat, t.put(gt[f].quat)));
        Val cam_f = add(t, trans_mse, sub(t, t.put(Tensor::scalar(1)), qdot));

        if (first) {
            depth_acc = depth_f;
            pm_acc = pm_f;
            cam_acc = cam_f;
            first = false;
        } else {
            depth_acc = add(t, depth_acc, depth_f);
            pm_acc = add(t, pm_acc, pm_f);
            cam_acc = add(t, cam_acc, cam_f);
        }
    }
    const real inv_f = real(1) / real(pred.size());
    LossTerms terms;
    terms.depth = scale(t, depth_acc, inv_f);
    terms.pointmap = scale(t, pm_acc, inv_f);
    terms.camera = scale(t, cam_acc, inv_f);
    terms.total = add(t, add(t, terms.depth, terms.pointmap), terms.camera);
    return terms;
}

DriftReport evaluate_drift(std::span<const Prediction> pred, std::span<const GroundTruthFrame> gt) {
    if (pred.size() != gt.size() || pred.empty()) {
        throw ShapeError("evaluate_drift: prediction/ground-truth count mismatch");
    }
    DriftReport report;

    // first-frame anchoring: A maps predicted frame 0 onto gt frame 0
    const geo::Mat3 r_p0 = geo::quat_to_mat(geo::tensor_to_quat(pred[0].quat));
    const geo::Mat3 r_g0 = geo::quat_to_mat(geo::tensor_to_quat(gt[0].quat));
    const geo::Mat3 r_align = geo::mat_mul(r_g0, geo::mat_transpose(r_p0));
    const geo::Vec3 t_p0 = geo::tensor_to_vec3(pred[0].trans);
    const geo::Vec3 t_g0 = geo::tensor_to_vec3(gt[0].trans);
    const geo::Vec3 t_align = geo::sub(t_g0, geo::mat_apply(r_align, t_p0));

    real pm_sq_sum = 0;
    std::int64_t pm_count = 0;
    std::vector<geo::Vec3> pred_points, gt_points;
    for (std::size_t f = 0; f < pred.size(); ++f) {
        const geo::Vec3 tp = geo::tensor_to_vec3(pred[f].trans);
        const geo::Vec3 aligned = geo::add(geo::mat_apply(r_align, tp), t_align);
        report.translation_errors.push_back(
            geo::norm(geo::sub(aligned, geo::tensor_to_vec3(gt[f].trans))));

        const Tensor& pm = pred[f].pointmap;
        const Tensor& gm = gt[f].pointmap;
        for (std::int64_t i = 0; i < pm.extent(0); ++i) {
            geo::Vec3 p{pm.at(i, 0), pm.at(i, 1), pm.at(i, 2)};
            p = geo::add(geo::mat_apply(r_align, p), t_align);
            const geo::Vec3 g{gm.at(i, 0), gm.at(i, 1), gm.at(i, 2)};
            const geo::Vec3 diff = geo::sub(p, g);
            pm_sq_sum += geo::dot(diff, diff);
            ++pm_count;
            pred_points.push_back(p);
            gt_points.push_back(g);
        }
    }
    report.endpoint_drift = report.translation_errors.back();
    real terr = 0;
    for (real e : report.translation_errors) terr += e;
    report.mean_translation_error = terr / real(report.translation_errors.size());
    report.pointmap_mse = pm_sq_sum / real(pm_count);

    auto nearest = [](const std::vector<geo::Vec3>& from, const std::vector<geo::Vec3>& to) {
        real acc = 0;
        for (const auto& p : from) {
            real best = std::numeric_limits<real>::max();
            for (const auto& q : to) best = std::min(best, geo::norm(geo::sub(p, q)));
            acc += best;
        }
        return acc / real(from.size());
    };
    report.pointmap_accuracy = nearest(pred_points, gt_points);
    report.pointmap_completeness = nearest(gt_points, pred_points);
    return report;
}

std::vector<Prediction> run_streaming(Model& m, std::span<const Frame> frames,
                                      std::size_t* peak_retained_bytes) {
    WindowSchedule sched =
        make_windows(static_cast<std::int64_t>(frames.size()), m.run.L, m.run.stride);
    PipelineStream stream(m);
    std::vector<Prediction> out(frames.size());
    std::size_t peak = 0;

    // Window boundaries drop the previous tape; the stream re-leafs its
    // carried values, so retained state stays fixed while the sequence
    // grows.
    Tape tape;
    ModelVals mv = bind(tape, m);
    for (std::size_t wi = 0; wi < sched.windows.size(); ++wi) {
        const auto& w = sched.windows[wi];
        WindowResult r = stream.step_window(
            tape, frames.subspan(static_cast<std::size_t>(w.begin),
                                 static_cast<std::size_t>(w.size())),
            mv);
        for (std::int64_t f = 0; f < w.size(); ++f) {
            // overlapping windows: the later window's prediction wins
            out[static_cast<std::size_t>(w.begin + f)] =
                snapshot(tape, r.predictions[static_cast<std::size_t>(f)]);
        }
        peak = std::max(peak, stream.retained_bytes(tape));
        if (wi + 1 < sched.windows.size()) {
            Tape fresh;
            stream.rebind(tape, fresh);
            tape = std::move(fresh);
            mv = bind(tape, m);
        }
    }
    if (peak_retained_bytes) *peak_retained_bytes = peak;
    return out;
}

}  // namespace swm
