#pragma once

#include <filesystem>

#include "swm/backbone.hpp"
#include "swm/config.hpp"
#include "swm/injector.hpp"
#include "swm/memory_buffer.hpp"
#include "swm/serialize.hpp"
#include "swm/ssm.hpp"

namespace swm {

// Parameter groups, used for freezing, hashing and checkpoint layout.
inline constexpr const char* kGroupBackbone = "backbone";
inline constexpr const char* kGroupMambaK = "mamba.K";
inline constexpr const char* kGroupMambaV = "mamba.V";
inline constexpr const char* kGroupInjector = "injector";

// All learnable state of one pipeline: frozen-or-not backbone, the two
// temporal encoding blocks (K and V streams), and the injector branches.
struct Model {
    RunConfig run;
    BackboneConfig backbone_cfg;
    MambaConfig mamba_cfg;

    BackboneParams backbone;
    MambaBlockParams mamba_k;
    MambaBlockParams mamba_v;  // unused when run.share_stream_params
    InjectorParams injector;

    // Deterministic init; each group draws from its own forked stream so
    // ablation arms can share untouched groups byte for byte.
    static Model init(const RunConfig& cfg);

    std::int64_t tokens_per_frame() const;
    MemoryBufferConfig memory_config() const;

    // Stable-order enumeration; group prefixes: backbone, mamba.K,
    // mamba.V (unless shared), injector.
    void visit_params(const ParamVisitor& fn);
    io::NamedTensors named_params();
    std::uint64_t group_hash(const std::string& group_prefix);

    void save(const std::filesystem::path& dir);
    void load(const std::filesystem::path& dir);
};

struct ModelVals {
    BackboneVals backbone;
    MambaBlockVals mamba_k, mamba_v;
    InjectorVals injector;
};
ModelVals bind(Tape& t, const Model& m);

}  // namespace swm
