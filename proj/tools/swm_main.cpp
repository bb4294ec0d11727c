// swm: streaming window-memory reconstruction toolkit.
//
// Subcommands: gen, train, eval, bench, ablate, gradcheck, scancheck.
// All artifacts land under --out (default $SWM_OUT_DIR or ./out).

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "swm/ablation.hpp"
#include "swm/bench.hpp"
#include "swm/checks.hpp"
#include "swm/serialize.hpp"
#include "swm/train.hpp"

namespace fs = std::filesystem;
using namespace swm;

namespace {

fs::path default_out_root() {
    if (const char* env = std::getenv("SWM_OUT_DIR")) return fs::path(env);
    return fs::path("out");
}

RunConfig load_run_config(const std::string& config_path, std::uint64_t seed, bool seed_set) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = parse_config_file(config_path);
    if (seed_set) cfg.seed = seed;
    return cfg;
}

void print_reports(const std::vector<CheckReport>& reports) {
    for (const auto& r : reports) {
        std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name << "  max_err=" << r.value
                  << "  threshold=" << r.threshold << "\n";
    }
}

std::vector<std::int64_t> parse_counts(const std::string& csv) {
    std::vector<std::int64_t> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stoll(item));
    }
    return out;
}

int cmd_gen(std::uint64_t seed, std::int64_t frames, const std::string& profile,
            const fs::path& out) {
    SceneConfig cfg;
    cfg.n_frames = frames;
    cfg.profile = parse_profile(profile);
    SyntheticScene scene = gen_scene(seed, cfg);

    fs::create_directories(out);
    io::NamedTensors named;
    for (std::size_t i = 0; i < scene.frames.size(); ++i) {
        const std::string base = "frame" + std::to_string(i);
        named.emplace_back(base + ".image", scene.frames[i].image);
        named.emplace_back(base + ".gt.pointmap", scene.gt[i].pointmap);
        named.emplace_back(base + ".gt.depth", scene.gt[i].depth);
        named.emplace_back(base + ".gt.quat", scene.gt[i].quat);
        named.emplace_back(base + ".gt.trans", scene.gt[i].trans);
    }
    io::save_named_tensors(out / "scene.bin", out / "scene.json", named);
    std::cout << "wrote " << scene.frames.size() << " frames to " << out << "\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& out) {
    fs::create_directories(out);
    Model model = Model::init(cfg);
    auto scenes = make_dataset(cfg);
    std::ofstream metrics(out / "metrics.jsonl");
    TrainResult result = train(model, scenes, &metrics);
    save_checkpoint(model, out / "checkpoint", result);
    std::cout << "steps=" << result.metrics.size() << " first_loss=" << result.first_loss
              << " last_loss=" << result.last_loss << "\n";
    std::cout << "checkpoint at " << (out / "checkpoint") << "\n";
    return 0;
}

int cmd_eval(const std::string& checkpoint, std::uint64_t seed, std::int64_t frames,
             const std::string& profile, const fs::path& out) {
    Model model = checkpoint.empty() ? Model::init(RunConfig{}) : load_checkpoint(checkpoint);
    SceneConfig scfg;
    scfg.n_frames = frames;
    scfg.profile = parse_profile(profile);
    scfg.frame_size = model.run.frame_size;
    scfg.patch = model.run.patch;
    scfg.channels = model.run.channels;
    SyntheticScene scene = gen_scene(seed, scfg);
    DriftReport report = evaluate_on_scene(model, scene);

    nlohmann::json j;
    j["endpoint_drift"] = static_cast<double>(report.endpoint_drift);
    j["mean_translation_error"] = static_cast<double>(report.mean_translation_error);
    j["pointmap_mse"] = static_cast<double>(report.pointmap_mse);
    j["pointmap_accuracy"] = static_cast<double>(report.pointmap_accuracy);
    j["pointmap_completeness"] = static_cast<double>(report.pointmap_completeness);
    j["translation_errors"] = report.translation_errors;
    fs::create_directories(out);
    std::ofstream os(out / "drift_report.json");
    os << j.dump(2) << "\n";
    std::cout << "endpoint_drift=" << report.endpoint_drift
              << " pointmap_mse=" << report.pointmap_mse << "\n";
    return 0;
}

int cmd_bench(const std::string& counts_csv, int reps, std::uint64_t seed, const fs::path& out) {
    BenchConfig cfg = BenchConfig::defaults();
    if (!counts_csv.empty()) cfg.frame_counts = parse_counts(counts_csv);
    cfg.reps = reps;
    cfg.seed = seed;
    auto records = bench_scaling(cfg, &std::cout);
    fs::create_directories(out);
    std::ofstream csv(out / "bench.csv");
    write_bench_csv(csv, records);
    for (const auto& method : cfg.methods) {
        std::cout << method << " fitted exponent: " << fit_loglog_exponent(records, method) << "\n";
    }
    std::cout << "wrote " << (out / "bench.csv") << "\n";
    return 0;
}

int cmd_ablate(const RunConfig& base, std::int64_t seeds, const fs::path& out) {
    AblationReport report = run_ablation(base, seeds, &std::cout);
    fs::create_directories(out);
    std::ofstream os(out / "ablation.json");
    os << ablation_report_json(report) << "\n";
    std::cout << "wrote " << (out / "ablation.json") << "\n";
    for (const auto& arm : report.arms) {
        std::cout << arm.arm << ": mean_endpoint_drift=" << arm.mean_endpoint_drift
                  << " mean_pointmap_mse=" << arm.mean_pointmap_mse << "\n";
    }
    return report.shared_init_verified ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"streaming window-memory reconstruction toolkit"};
    app.require_subcommand(1);
    app.fallthrough();  // --seed/--config/--out may follow the subcommand

    std::string config_path;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    app.add_option("--config", config_path, "key=value run configuration file")->capture_default_str();
    app.add_option("--seed", seed, "RNG seed")->each([&seed_set](const std::string&) { seed_set = true; });
    app.add_option("--out", out_dir, "output directory (default $SWM_OUT_DIR or ./out)");

    auto* gen = app.add_subcommand("gen", "generate a synthetic scene");
    std::int64_t gen_frames = 32;
    std::string gen_profile = "loop";
    gen->add_option("--frames", gen_frames, "frame count");
    gen->add_option("--profile", gen_profile, "orbit | corridor | loop");

    auto* train_cmd = app.add_subcommand("train", "two-stage training run");

    auto* eval_cmd = app.add_subcommand("eval", "drift evaluation on a synthetic sequence");
    std::string eval_checkpoint;
    std::int64_t eval_frames = 80;
    std::string eval_profile = "loop";
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "checkpoint directory");
    eval_cmd->add_option("--frames", eval_frames, "sequence length");
    eval_cmd->add_option("--profile", eval_profile, "orbit | corridor | loop");

    auto* bench_cmd = app.add_subcommand("bench", "runtime/memory scaling benchmark");
    std::string bench_counts = "50,100,200,400";
    int bench_reps = 5;
    bench_cmd->add_option("--frames", bench_counts, "comma-separated ascending frame counts");
    bench_cmd->add_option("--reps", bench_reps, "timing repetitions (median taken)");

    auto* ablate_cmd = app.add_subcommand("ablate", "train and compare ablation arms");
    std::int64_t ablate_seeds = 10;
    ablate_cmd->add_option("--seeds", ablate_seeds, "paired seeds per arm");

    auto* gradcheck_cmd = app.add_subcommand("gradcheck", "finite-difference gradient suites");
    int grad_seeds = 20;
    gradcheck_cmd->add_option("--seeds", grad_seeds, "seeds per case");

    auto* scancheck_cmd = app.add_subcommand("scancheck", "chunked/sequential scan equivalence");
    int scan_instances = 1000;
    scancheck_cmd->add_option("--instances", scan_instances, "random instances");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;  // usage error
    }

    const fs::path out = out_dir.empty() ? default_out_root() : fs::path(out_dir);
    try {
        if (*gen) return cmd_gen(seed, gen_frames, gen_profile, out);
        if (*train_cmd) return cmd_train(load_run_config(config_path, seed, seed_set), out);
        if (*eval_cmd) return cmd_eval(eval_checkpoint, seed, eval_frames, eval_profile, out);
        if (*bench_cmd) return cmd_bench(bench_counts, bench_reps, seed, out);
        if (*ablate_cmd) return cmd_ablate(load_run_config(config_path, seed, seed_set), ablate_seeds, out);
        if (*gradcheck_cmd) {
            auto reports = run_gradient_checks(grad_seeds);
            print_reports(reports);
            return all_pass(reports) ? 0 : 1;
        }
        if (*scancheck_cmd) {
            auto reports = run_scan_checks(scan_instances);
            print_reports(reports);
            return all_pass(reports) ? 0 : 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
