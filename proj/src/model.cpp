#include "swm/model.hpp"

namespace swm {

Model Model::init(const RunConfig& cfg) {
    validate(cfg);
    Model m;
    m.run = cfg;

    m.backbone_cfg.dim = cfg.D;
    m.backbone_cfg.blocks = cfg.blocks;
    m.backbone_cfg.heads = cfg.heads;
    m.backbone_cfg.patch = cfg.patch;
    m.backbone_cfg.channels = cfg.channels;

    m.mamba_cfg.n_state = cfg.n_state;
    m.mamba_cfg.dw_kernel = cfg.dw_kernel;
    m.mamba_cfg.residual_to_normalized = cfg.residual_to_normalized;

    Rng root(cfg.seed);
    Rng rng_backbone = root.fork(0);
    Rng rng_mamba_k = root.fork(1);
    Rng rng_mamba_v = root.fork(2);
    Rng rng_injector = root.fork(3);

    m.backbone = BackboneParams::init(m.backbone_cfg, rng_backbone);
    m.mamba_k = MambaBlockParams::init(cfg.D, m.mamba_cfg, rng_mamba_k);
    m.mamba_v = MambaBlockParams::init(cfg.D, m.mamba_cfg, rng_mamba_v);

    InjectorConfig icfg;
    icfg.dim = cfg.D;
    icfg.random_output_init = cfg.injector_random_output;
    m.injector = InjectorParams::init(static_cast<std::int64_t>(cfg.injection_layers.size()), icfg,
                                      rng_injector);
    return m;
}

std::int64_t Model::tokens_per_frame() const {
    const std::int64_t g = run.frame_size / run.patch;
    return g * g;
}

MemoryBufferConfig Model::memory_config() const {
    MemoryBufferConfig mc;
    mc.capacity = run.T;
    mc.alpha = run.alpha;
    mc.d_inner = mamba_cfg.expand * run.D;
    mc.n_state = mamba_cfg.n_state;
    return mc;
}

void Model::visit_params(const ParamVisitor& fn) {
    swm::visit_params(backbone, kGroupBackbone, fn);
    swm::visit_params(mamba_k, kGroupMambaK, fn);
    if (!run.share_stream_params) swm::visit_params(mamba_v, kGroupMambaV, fn);
    swm::visit_params(injector, kGroupInjector, fn);
}

io::NamedTensors Model::named_params() {
    io::NamedTensors out;
    visit_params([&out](const std::string& name, Tensor& v) { out.emplace_back(name, v); });
    return out;
}

std::uint64_t Model::group_hash(const std::string& group_prefix) {
    io::NamedTensors group;
    visit_params([&](const std::string& name, Tensor& v) {
        if (name.rfind(group_prefix, 0) == 0) group.emplace_back(name, v);
    });
    if (group.empty()) throw ConfigError("unknown parameter group '" + group_prefix + "'");
    return io::content_hash(group);
}

void Model::save(const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    io::save_named_tensors(dir / "params.bin", dir / "manifest.json", named_params());
}

void Model::load(const std::filesystem::path& dir) {
    auto loaded = io::load_named_tensors(dir / "params.bin", dir / "manifest.json");
    std::size_t i = 0;
    visit_params([&](const std::string& name, Tensor& v) {
        if (i >= loaded.size() || loaded[i].first != name) {
            throw IoError("checkpoint: parameter '" + name + "' missing or out of order");
        }
        if (loaded[i].second.shape() != v.shape()) {
            throw IoError("checkpoint: shape mismatch for '" + name + "'");
        }
        v = loaded[i].second;
        ++i;
    });
    if (i != loaded.size()) throw IoError("checkpoint: extra parameters in container");
}

ModelVals bind(Tape& t, const Model& m) {
    ModelVals v;
    v.backbone = bind(t, m.backbone);
    v.mamba_k = bind(t, m.mamba_k);
    v.mamba_v = bind(t, m.run.share_stream_params ? m.mamba_k : m.mamba_v);
    v.injector = bind(t, m.injector);
    return v;
}

}  // namespace swm
