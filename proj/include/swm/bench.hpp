#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "swm/scene.hpp"
#include "swm/train.hpp"

namespace swm {

inline constexpr const char* kMethodMemory = "memory";
inline constexpr const char* kMethodWindowed = "windowed-baseline";
inline constexpr const char* kMethodGlobal = "full-global-attention";

struct BenchRecord {
    std::string method;
    std::int64_t frames = 0;
    double seconds = 0;
    std::uint64_t peak_bytes = 0;
};

struct BenchConfig {
    RunConfig run;  // dims shared by every method
    std::vector<std::int64_t> frame_counts = {50, 100, 200, 400};
    std::vector<std::string> methods = {kMethodMemory, kMethodWindowed, kMethodGlobal};
    int reps = 5;  // median-of-reps timing
    std::uint64_t seed = 0;

    static BenchConfig defaults();
};

// Measures wall time (median of reps) and peak retained state bytes per
// method and frame count, single worker, inference only.
std::vector<BenchRecord> bench_scaling(const BenchConfig& cfg, std::ostream* progress = nullptr);

// CSV schema: method,frames,seconds,peak_bytes
void write_bench_csv(std::ostream& os, std::span<const BenchRecord> records);

// Least-squares slope of log(seconds) against log(frames) for one method.
double fit_loglog_exponent(std::span<const BenchRecord> records, const std::string& method);

// Kernel-only joint pass over every frame at once: the quadratic
// reference. Attention is computed in row blocks so memory stays
// O(S * D).
std::vector<Prediction> global_attention_forward(const BackboneParams& params,
                                                 std::span<const Frame> frames,
                                                 std::int64_t block_rows = 256);

}  // namespace swm
