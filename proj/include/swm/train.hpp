#pragma once

#include <filesystem>
#include <map>
#include <optional>

#include "swm/pipeline.hpp"
#include "swm/scene.hpp"

namespace swm {

// Per-group trainable flags. Unknown group names are rejected.
class TrainableFlags {
public:
    TrainableFlags();
    void set(const std::string& group, bool trainable);
    bool trainable(const std::string& param_name) const;  // by longest matching prefix
    static TrainableFlags stage1();                       // backbone frozen
    static TrainableFlags all();

private:
    std::map<std::string, bool> groups_;
};

// Fixed-step optimizer with decoupled weight decay and first/second
// moment accumulators.
class AdamW {
public:
    explicit AdamW(real lr, real weight_decay, real beta1 = real(0.9), real beta2 = real(0.999),
                   real eps = real(1e-8));
    void set_lr(real lr) { lr_ = lr; }
    real lr() const { return lr_; }

    // Applies one update to `value` given its gradient.
    void step_param(const std::string& name, Tensor& value, const Tensor& grad);
    void next_step() { ++step_; }

private:
    struct Moments {
        Tensor m, v;
    };
    real lr_, weight_decay_, beta1_, beta2_, eps_;
    std::int64_t step_ = 1;
    std::map<std::string, Moments> moments_;
};

struct MetricsRow {
    std::int64_t step = 0;
    real loss_total = 0, loss_depth = 0, loss_pointmap = 0, loss_camera = 0;
    std::string to_json_line() const;
};

struct TrainResult {
    std::vector<MetricsRow> metrics;
    std::uint64_t backbone_hash_before = 0;
    std::uint64_t backbone_hash_after_stage1 = 0;
    real first_loss = 0, last_loss = 0;
};

// One optimization step on a window sequence drawn from the scene:
// builds a tape, streams the windows with full gradient flow through the
// buffer and carried states, and applies the optimizer to trainable
// groups. Returns the loss terms.
MetricsRow train_step(Model& m, const SyntheticScene& scene, std::int64_t n_windows,
                      const TrainableFlags& flags, AdamW& opt, std::int64_t step_index);

// Two-stage schedule: stage 1 freezes the backbone and verifies its hash
// afterwards; stage 2 unfreezes everything and walks the sequence-length
// ladder. Metrics stream to `log` one JSON object per line.
TrainResult train(Model& m, const std::vector<SyntheticScene>& scenes, std::ostream* log);

// Checkpoint = parameter container + manifest + config echo +
// frozen-group hash record.
void save_checkpoint(Model& m, const std::filesystem::path& dir, const TrainResult& result);
Model load_checkpoint(const std::filesystem::path& dir);

// Convenience: run the trained (or untrained) model over a scene and
// report drift against ground truth.
DriftReport evaluate_on_scene(Model& m, const SyntheticScene& scene);

// Toy training set derived from the run config.
std::vector<SyntheticScene> make_dataset(const RunConfig& cfg);

}  // namespace swm
