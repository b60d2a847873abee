#include "lreid/commands.hpp"

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "lreid/errors.hpp"
#include "lreid/textio.hpp"

namespace lreid {

namespace fs = std::filesystem;

namespace {

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write output file '" + path + "'");
    out << content;
    if (!out) throw IoError("failed while writing '" + path + "'");
}

std::string file_hash(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot hash missing output '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return hash_hex(fnv1a_hash(os.str()));
}

} // namespace

RunManifest cmd_run(const ExperimentConfig& config) {
    const auto t0 = std::chrono::steady_clock::now();
    const fs::path run_dir = fs::path(config.out_dir) / config.hash_hex();
    fs::create_directories(run_dir);

    const World world = build_world(config.seed);
    SequenceResult result = run_sequence(config, &world);

    RunManifest manifest;
    manifest.config_echo = config.canonical_echo();
    manifest.world_seed = config.seed;
    manifest.run_dir = run_dir.string();

    auto emit = [&](const std::string& name, const std::string& content) {
        const std::string path = (run_dir / name).string();
        write_file(path, content);
        manifest.files.emplace_back(path, file_hash(path));
    };

    emit("world.txt", world_descriptor(world));
    emit("matrix.csv", result.matrix.to_csv());
    for (std::size_t t = 0; t < result.tasks.size(); ++t) {
        if (!result.tasks[t].casp_epochs.empty())
            emit("task" + std::to_string(t) + "_casp.csv", casp_log_csv(result.tasks[t].casp_epochs));
        emit("task" + std::to_string(t) + "_akfp.csv", akfp_log_csv(result.tasks[t].akfp_epochs));
    }
    if (!result.heldout.empty()) {
        std::ostringstream os;
        os << "eval_domain,mAP,rank1\n";
        for (const auto& [name, metrics] : result.heldout)
            os << name << "," << format_metric(metrics.map_pct) << "," << format_metric(metrics.rank1_pct)
               << "\n";
        emit("heldout.csv", os.str());
    }
    emit("analysis.csv", analysis_long_csv(result.analysis));
    emit("analysis_summary.txt", analysis_summary(result.analysis));
    {
        const std::string ckpt_path = (run_dir / "checkpoint.txt").string();
        save_checkpoint(result.model, config, result.tasks, ckpt_path);
        manifest.files.emplace_back(ckpt_path, file_hash(ckpt_path));
    }

    std::string combined;
    for (const auto& [path, hash] : manifest.files)
        combined += fs::path(path).filename().string() + ":" + hash + "\n";
    manifest.combined_hash = hash_hex(fnv1a_hash(combined));
    manifest.duration_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    nlohmann::json j;
    j["schema_version"] = 1;
    j["config_echo"] = manifest.config_echo;
    j["world_seed"] = manifest.world_seed;
    j["combined_hash"] = manifest.combined_hash;
    j["duration_seconds"] = manifest.duration_seconds;
    j["files"] = nlohmann::json::array();
    for (const auto& [path, hash] : manifest.files)
        j["files"].push_back({{"path", fs::path(path).filename().string()}, {"hash", hash}});
    write_file((run_dir / "manifest.json").string(), j.dump(2) + "\n");

    return manifest;
}

namespace {

struct SuiteRow {
    std::string label;
    SeenDomainMatrix::Averages averages;
};

SeenDomainMatrix::Averages run_for_averages(const ExperimentConfig& cfg, const World& world) {
    const SequenceResult result = run_sequence(cfg, &world);
    return result.matrix.final_averages();
}

} // namespace

std::string cmd_orders(const ExperimentConfig& base) {
    const World world = build_world(base.seed);
    std::ostringstream os;
    os << "order,variant,total_mAP,total_R1\n";
    for (int order = 1; order <= 6; ++order) {
        for (const Variant variant : {Variant::Full, Variant::Sft}) {
            ExperimentConfig cfg = base;
            cfg.order = order;
            cfg.sequence.clear();
            cfg.variant = variant;
            const auto avg = run_for_averages(cfg, world);
            os << order << "," << to_string(variant) << "," << format_metric(avg.total_map) << ","
               << format_metric(avg.total_r1) << "\n";
        }
    }
    fs::create_directories(base.out_dir);
    const std::string path = (fs::path(base.out_dir) / "orders.csv").string();
    write_file(path, os.str());
    return path;
}

std::string cmd_ablate(const ExperimentConfig& base) {
    const World world = build_world(base.seed);
    std::ostringstream os;
    os << "variant,sc_mAP,sc_R1,cc_mAP,cc_R1,total_mAP,total_R1\n";
    for (const Variant variant : {Variant::Full, Variant::NoCasp, Variant::NoCtx, Variant::NoAkfp,
                                  Variant::NoLproj, Variant::SinglePrototype}) {
        ExperimentConfig cfg = base;
        cfg.order = 1;
        cfg.sequence.clear();
        cfg.variant = variant;
        const auto avg = run_for_averages(cfg, world);
        os << to_string(variant) << "," << format_metric(avg.sc_map) << "," << format_metric(avg.sc_r1)
           << "," << format_metric(avg.cc_map) << "," << format_metric(avg.cc_r1) << ","
           << format_metric(avg.total_map) << "," << format_metric(avg.total_r1) << "\n";
    }
    fs::create_directories(base.out_dir);
    const std::string path = (fs::path(base.out_dir) / "ablations.csv").string();
    write_file(path, os.str());
    return path;
}

std::vector<double> default_sweep_values(const std::string& param) {
    if (param == "lambda") return {0.1, 0.3, 0.5, 0.7, 1.0};
    if (param == "beta") return {0.0001, 0.0005, 0.001, 0.005, 0.01};
    throw ConfigError("unknown sweep parameter '" + param + "' (expected lambda or beta)");
}

std::string cmd_sweep(const std::string& param, std::vector<double> values, const ExperimentConfig& base) {
    if (param != "lambda" && param != "beta")
        throw ConfigError("unknown sweep parameter '" + param + "' (expected lambda or beta)");
    if (values.empty()) values = default_sweep_values(param);
    for (double v : values)
        if (v <= 0.0 && param == "beta")
            throw ConfigError("beta sweep values must be positive");
    const World world = build_world(base.seed);
    std::ostringstream os;
    os << "value,total_mAP,total_R1\n";
    for (double v : values) {
        ExperimentConfig cfg = base;
        cfg.order = 1;
        cfg.sequence.clear();
        cfg.variant = Variant::Full;
        if (param == "lambda")
            cfg.lambda = v;
        else
            cfg.beta_s = v;
        const auto avg = run_for_averages(cfg, world);
        os << format_double(v) << "," << format_metric(avg.total_map) << ","
           << format_metric(avg.total_r1) << "\n";
    }
    fs::create_directories(base.out_dir);
    const std::string path = (fs::path(base.out_dir) / ("sweep_" + param + ".csv")).string();
    write_file(path, os.str());
    return path;
}

} // namespace lreid
