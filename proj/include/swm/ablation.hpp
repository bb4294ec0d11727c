#pragma once

#include <ostream>

#include "swm/train.hpp"

namespace swm {

inline constexpr const char* kArmFull = "full";
inline constexpr const char* kArmNoMambaUpdate = "w/o-mamba-update";
inline constexpr const char* kArmNoMemory = "w/o-memory";
inline constexpr const char* kArmNoZeroInit = "w/o-zero-init";

struct AblationArmResult {
    std::string arm;
    std::vector<real> endpoint_drifts;  // per seed
    std::vector<real> pointmap_mses;
    real mean_endpoint_drift = 0;
    real mean_pointmap_mse = 0;
    // meaningful for the w/o-zero-init arm: untrained output differs from
    // the bare backbone
    bool step0_identity_broken = false;
};

struct AblationReport {
    std::vector<AblationArmResult> arms;
    bool shared_init_verified = false;
    std::int64_t seeds = 0;
};

// Trains each arm with an identical seed/step budget on the same
// loop-profile scenes and reports drift and pointmap error. Non-ablated
// parameter groups are verified to share initialization bytes.
AblationReport run_ablation(const RunConfig& base, std::int64_t n_seeds,
                            std::ostream* progress = nullptr);

std::string ablation_report_json(const AblationReport& report);

}  // namespace swm
