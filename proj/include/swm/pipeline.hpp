#pragma once

#include <optional>

#include "swm/model.hpp"

namespace swm {

struct WindowRange {
    std::int64_t begin = 0, end = 0;  // frame indices, half-open
    std::int64_t size() const { return end - begin; }
};

struct WindowSchedule {
    std::vector<WindowRange> windows;
    std::int64_t length = 0;  // L
    std::int64_t stride = 0;
};

// Windows start at 0, stride, 2*stride, ...; every frame is covered; the
// last window may be shorter. stride > L would leave gaps and is
// rejected.
WindowSchedule make_windows(std::int64_t n_frames, std::int64_t length, std::int64_t stride);

struct GroundTruthFrame {
    Tensor pointmap;  // [N, 3]
    Tensor depth;     // [rows, cols], positive
    Tensor quat;      // [4] unit
    Tensor trans;     // [3]
};

// Per-window artifacts handed back to the caller.
struct WindowResult {
    std::vector<FramePredictionVals> predictions;  // one per frame in the window
};

// Streaming state carried between windows by one pipeline stream: the
// dual-stream buffer plus the refined memory tokens pending injection
// into the next window.
class PipelineStream {
public:
    PipelineStream(const Model& m);

    // Runs one window: inject pending memory during the backbone pass,
    // extract the window feature from the final features, refine both
    // streams through their temporal encoders, update the buffer and
    // carry the SSM states.
    WindowResult step_window(Tape& t, std::span<const Frame> frames, const ModelVals& mv);

    // Move live values onto a fresh tape between windows (streaming
    // inference drops each window's tape).
    void rebind(const Tape& old_tape, Tape& fresh);

    void reset();

    // Buffer bytes + carried state bytes + pending injection tokens.
    std::size_t retained_bytes(const Tape& t) const;

    MemoryBuffer& buffer() { return buffer_; }
    const MemoryBuffer& buffer() const { return buffer_; }
    bool has_pending() const { return pending_.has_value(); }

private:
    const Model& model_;
    MemoryBuffer buffer_;
    std::optional<MemoryInjection> pending_;
};

struct LossTerms {
    Val total, depth, pointmap, camera;
};

// L = L_depth + L_pointmap + L_camera, averaged over frames:
//   depth: MSE on log-depth; pointmap: mean squared point distance;
//   camera: translation MSE + (1 - |<q_pred, q_gt>|).
LossTerms multi_task_loss(Tape& t, std::span<const FramePredictionVals> pred,
                          std::span<const GroundTruthFrame> gt);

struct DriftReport {
    std::vector<real> translation_errors;  // per frame, first-frame aligned
    real endpoint_drift = 0;
    real pointmap_mse = 0;       // aligned, token-correspondence MSE
    real pointmap_accuracy = 0;  // mean nearest-gt distance of predicted points
    real pointmap_completeness = 0;
    real mean_translation_error = 0;
};

// First-frame anchoring: rigid-align the predicted trajectory to ground
// truth using frame 0, then report per-frame translation error, endpoint
// drift and pointmap proxies.
DriftReport evaluate_drift(std::span<const Prediction> pred, std::span<const GroundTruthFrame> gt);

// Streaming inference over a whole sequence with one tape per window.
// Overlapping windows resolve duplicate frames by last write.
std::vector<Prediction> run_streaming(Model& m, std::span<const Frame> frames,
                                      std::size_t* peak_retained_bytes = nullptr);

}  // namespace swm
