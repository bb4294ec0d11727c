#include "swm/config.hpp"

#include <fstream>
#include <sstream>

namespace swm {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::vector<std::int64_t> parse_int_list(const std::string& s) {
    std::vector<std::int64_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(std::stoll(item));
    }
    return out;
}

std::string int_list_to_string(const std::vector<std::int64_t>& v) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(v[i]);
    }
    return out;
}

bool parse_bool(const std::string& s) {
    if (s == "true" || s == "1") return true;
    if (s == "false" || s == "0") return false;
    throw ConfigError("config: bad boolean '" + s + "'");
}

}  // namespace

RunConfig parse_config_text(const std::string& text) {
    RunConfig cfg;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        }
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            if (key == "T") cfg.T = std::stoll(value);
            else if (key == "L") cfg.L = std::stoll(value);
            else if (key == "stride") cfg.stride = std::stoll(value);
            else if (key == "alpha") cfg.alpha = static_cast<real>(std::stod(value));
            else if (key == "injection_layers") cfg.injection_layers = parse_int_list(value);
            else if (key == "D") cfg.D = std::stoll(value);
            else if (key == "blocks") cfg.blocks = std::stoll(value);
            else if (key == "heads") cfg.heads = std::stoll(value);
            else if (key == "patch") cfg.patch = std::stoll(value);
            else if (key == "frame_size") cfg.frame_size = std::stoll(value);
            else if (key == "channels") cfg.channels = std::stoll(value);
            else if (key == "n_state") cfg.n_state = std::stoll(value);
            else if (key == "dw_kernel") cfg.dw_kernel = std::stoll(value);
            else if (key == "stage1_steps") cfg.stage1_steps = std::stoll(value);
            else if (key == "stage2_steps") cfg.stage2_steps = std::stoll(value);
            else if (key == "stage2_ladder") cfg.stage2_ladder = parse_int_list(value);
            else if (key == "lr_stage1") cfg.lr_stage1 = static_cast<real>(std::stod(value));
            else if (key == "lr_stage2") cfg.lr_stage2 = static_cast<real>(std::stod(value));
            else if (key == "pretrain_steps") cfg.pretrain_steps = std::stoll(value);
            else if (key == "lr_pretrain") cfg.lr_pretrain = static_cast<real>(std::stod(value));
            else if (key == "weight_decay") cfg.weight_decay = static_cast<real>(std::stod(value));
            else if (key == "seq_windows") cfg.seq_windows = std::stoll(value);
            else if (key == "seed") cfg.seed = std::stoull(value);
            else if (key == "profile") cfg.profile = value;
            else if (key == "scenes") cfg.scenes = std::stoll(value);
            else if (key == "scene_noise") cfg.scene_noise = static_cast<real>(std::stod(value));
            else if (key == "texture_period") cfg.texture_period = std::stoll(value);
            else if (key == "lattice") cfg.lattice = std::stoll(value);
            else if (key == "memory_enabled") cfg.memory_enabled = parse_bool(value);
            else if (key == "share_stream_params") cfg.share_stream_params = parse_bool(value);
            else if (key == "per_frame_entries") cfg.per_frame_entries = parse_bool(value);
            else if (key == "injector_random_output") cfg.injector_random_output = parse_bool(value);
            else if (key == "residual_to_normalized") cfg.residual_to_normalized = parse_bool(value);
            else throw ConfigError("config: unknown key '" + key + "'");
        } catch (const std::invalid_argument&) {
            throw ConfigError("config: bad value for '" + key + "': " + value);
        }
    }
    validate(cfg);
    return cfg;
}

RunConfig parse_config_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open config " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

std::string config_to_text(const RunConfig& c) {
    std::ostringstream os;
    os << "T = " << c.T << "\n";
    os << "L = " << c.L << "\n";
    os << "stride = " << c.stride << "\n";
    os << "alpha = " << c.alpha << "\n";
    os << "injection_layers = " << int_list_to_string(c.injection_layers) << "\n";
    os << "D = " << c.D << "\n";
    os << "blocks = " << c.blocks << "\n";
    os << "heads = " << c.heads << "\n";
    os << "patch = " << c.patch << "\n";
    os << "frame_size = " << c.frame_size << "\n";
    os << "channels = " << c.channels << "\n";
    os << "n_state = " << c.n_state << "\n";
    os << "dw_kernel = " << c.dw_kernel << "\n";
    os << "stage1_steps = " << c.stage1_steps << "\n";
    os << "stage2_steps = " << c.stage2_steps << "\n";
    os << "stage2_ladder = " << int_list_to_string(c.stage2_ladder) << "\n";
    os << "lr_stage1 = " << c.lr_stage1 << "\n";
    os << "lr_stage2 = " << c.lr_stage2 << "\n";
    os << "pretrain_steps = " << c.pretrain_steps << "\n";
    os << "lr_pretrain = " << c.lr_pretrain << "\n";
    os << "weight_decay = " << c.weight_decay << "\n";
    os << "seq_windows = " << c.seq_windows << "\n";
    os << "seed = " << c.seed << "\n";
    os << "profile = " << c.profile << "\n";
    os << "scenes = " << c.scenes << "\n";
    os << "scene_noise = " << c.scene_noise << "\n";
    os << "texture_period = " << c.texture_period << "\n";
    os << "lattice = " << c.lattice << "\n";
    os << "memory_enabled = " << (c.memory_enabled ? "true" : "false") << "\n";
    os << "share_stream_params = " << (c.share_stream_params ? "true" : "false") << "\n";
    os << "per_frame_entries = " << (c.per_frame_entries ? "true" : "false") << "\n";
    os << "injector_random_output = " << (c.injector_random_output ? "true" : "false") << "\n";
    os << "residual_to_normalized = " << (c.residual_to_normalized ? "true" : "false") << "\n";
    return os.str();
}

void validate(const RunConfig& c) {
    if (c.T < 1) throw ConfigError("config: T must be >= 1");
    if (c.L < 1) throw ConfigError("config: L must be >= 1");
    if (c.stride < 1 || c.stride > c.L) throw ConfigError("config: stride must be in [1, L]");
    if (c.alpha < 0 || c.alpha > 1) throw ConfigError("config: alpha must be in [0,1]");
    if (c.D < 4 || c.D % 4 != 0) throw ConfigError("config: D must be a positive multiple of 4");
    if (c.D % c.heads != 0) throw ConfigError("config: heads must divide D");
    if (c.frame_size % c.patch != 0) throw ConfigError("config: patch must divide frame_size");
    for (auto l : c.injection_layers) {
        if (l < 0 || l >= c.blocks) throw ConfigError("config: injection layer out of range");
    }
    if (c.profile != "orbit" && c.profile != "corridor" && c.profile != "loop") {
        throw ConfigError("config: unknown motion profile '" + c.profile + "'");
    }
}

}  // namespace swm
