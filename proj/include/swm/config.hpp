#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "swm/tensor.hpp"

namespace swm {

// Run configuration. Every field maps to a documented key in the flat
// key=value config file (same names).
struct RunConfig {
    // memory / windowing
    std::int64_t T = 4;       // memory horizon (buffer capacity)
    std::int64_t L = 2;       // frames per window
    std::int64_t stride = 2;  // window stride
    real alpha = 1;           // memory update gain
    std::vector<std::int64_t> injection_layers = {1, 3};

    // model dims
    std::int64_t D = 64;  // token dimension
    std::int64_t blocks = 4;
    std::int64_t heads = 4;
    std::int64_t patch = 14;
    std::int64_t frame_size = 28;  // frames are frame_size x frame_size
    std::int64_t channels = 3;
    std::int64_t n_state = 16;
    std::int64_t dw_kernel = 4;

    // training
    std::int64_t stage1_steps = 200;
    std::int64_t stage2_steps = 0;
    std::vector<std::int64_t> stage2_ladder = {8, 16, 32};  // windows per sequence
    real lr_stage1 = real(1e-3);
    real lr_stage2 = real(1e-4);
    // backbone warm-up for the ablation protocol, standing in for the
    // pretrained front end
    std::int64_t pretrain_steps = 0;
    real lr_pretrain = real(3e-3);
    real weight_decay = real(1e-4);
    std::int64_t seq_windows = 8;  // stage-1 sequence length, in windows
    std::uint64_t seed = 0;

    // data
    std::string profile = "loop";
    std::int64_t scenes = 2;  // scenes in the toy training set
    real scene_noise = real(0.02);
    std::int64_t texture_period = 0;  // repetitive-texture ambiguity (0 = unique)
    std::int64_t lattice = 6;         // world points per axis

    // switches
    bool memory_enabled = true;
    bool share_stream_params = false;
    bool per_frame_entries = false;
    bool injector_random_output = false;  // ablation arm
    bool residual_to_normalized = false;
};

RunConfig parse_config_file(const std::filesystem::path& path);
RunConfig parse_config_text(const std::string& text);
std::string config_to_text(const RunConfig& cfg);
void validate(const RunConfig& cfg);

}  // namespace swm
