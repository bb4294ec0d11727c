#pragma once

#include <utility>
#include <vector>

#include "swm/autodiff.hpp"
#include "swm/params_visit.hpp"
#include "swm/rng.hpp"

namespace swm {

// One zero-conv side branch: two position-wise channel-mixing maps with a
// GELU between. The output layer starts at exactly zero so the branch
// contributes nothing until trained.
struct ZeroConvBranch {
    Tensor w1, b1;  // [D, D_mid] / [D_mid], small random init
    Tensor w2, b2;  // [D_mid, D] / [D], zeros at init
};

struct InjectorLayerParams {
    ZeroConvBranch k_branch, v_branch;  // Theta_K, Theta_V
};

struct InjectorConfig {
    std::int64_t dim = 64;
    std::int64_t mid = 0;  // 0 -> same as dim (no bottleneck)
    real w1_std = real(0.02);
    // Ablation arm: output layer randomly initialized instead of zeroed.
    bool random_output_init = false;
    real w2_std = 0;  // 0 = standard 1/sqrt(mid) scale
};

struct InjectorParams {
    std::vector<InjectorLayerParams> layers;
    static InjectorParams init(std::int64_t n_layers, const InjectorConfig& cfg, Rng& rng);
};

struct ZeroConvVals {
    Val w1, b1, w2, b2;
};
struct InjectorLayerVals {
    ZeroConvVals k_branch, v_branch;
};
struct InjectorVals {
    std::vector<InjectorLayerVals> layers;
};

InjectorVals bind(Tape& t, const InjectorParams& p);
void visit_params(InjectorParams& p, const std::string& prefix, const ParamVisitor& fn);

// GELU(x.W1 + b1).W2 + b2, applied position-wise.
Val zero_conv_branch(Tape& t, Val x, const ZeroConvVals& branch);

// K' = K + branch_K(K_hat); V' = V + branch_V(V_hat). Purely additive.
std::pair<Val, Val> inject_kv(Tape& t, Val k, Val v, Val k_hat, Val v_hat,
                              const InjectorLayerVals& params);

// Attention over the injected keys/values.
Val attend_with_memory(Tape& t, Val q, Val k_prime, Val v_prime);

}  // namespace swm
