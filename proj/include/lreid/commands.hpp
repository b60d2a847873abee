#pragma once

#include <string>
#include <vector>

#include "lreid/config.hpp"
#include "lreid/pipeline.hpp"

namespace lreid {

struct RunManifest {
    std::string config_echo;
    std::uint64_t world_seed = 0;
    std::vector<std::pair<std::string, std::string>> files; // path, content hash (hex)
    std::string combined_hash;
    double duration_seconds = 0.0; // informational; excluded from hashes
    std::string run_dir;
};

// Executes one configured run and writes every declared artifact (world
// descriptor, matrix CSV, per-task loss CSVs, analysis reports, checkpoint,
// manifest) into <out_dir>/<config-hash>/.
RunManifest cmd_run(const ExperimentConfig& config);

// All six built-in orders for both the full model and the sequential
// fine-tuning baseline; writes <out_dir>/orders.csv shaped
// order,variant,total_mAP,total_R1 (12 data rows).
std::string cmd_orders(const ExperimentConfig& base);

// Order-1 run of the full model plus the five ablation variants; writes
// <out_dir>/ablations.csv shaped variant,sc_mAP,sc_R1,cc_mAP,cc_R1,total_mAP,total_R1.
std::string cmd_ablate(const ExperimentConfig& base);

// One full run per value of lambda or beta_s on order 1; writes
// <out_dir>/sweep_<param>.csv shaped value,total_mAP,total_R1.
std::string cmd_sweep(const std::string& param, std::vector<double> values, const ExperimentConfig& base);

std::vector<double> default_sweep_values(const std::string& param);

} // namespace lreid
