#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lreid/model.hpp"

namespace lreid {

inline constexpr std::uint64_t kDefaultSeed = 42;
inline constexpr int kConfigSchemaVersion = 1;

// Full experiment description. All randomness in a run flows from `seed`;
// no wall-clock or OS entropy is ever consulted.
struct ExperimentConfig {
    std::uint64_t seed = kDefaultSeed;
    int order = 1;                     // 1..6 built-in orders; ignored when sequence is set
    std::vector<std::string> sequence; // explicit domain names, overrides order when non-empty
    Variant variant = Variant::Full;
    double epoch_scale = 0.1; // maps the 120/60 paper-scale stage epochs to desk scale
    double lambda = 0.5;
    double beta_s = 0.001;
    double margin = 0.3;
    int batch_p = 16;
    int batch_k = 4;
    int cycles = 1; // prompt/projection alternations per task
    double state_ce_weight = 0.1;
    bool share_base_prompts = true;
    bool reset_prototypes = false;
    bool eval_heldout = false;
    double casp_lr = 3e-3;
    double akfp_lr = 1.5e-3;
    double weight_decay = 1e-4;
    std::string out_dir = "runs";

    int casp_epochs() const;
    int akfp_epochs() const;
    ModelSettings model_settings() const;
    // Stable label naming the task order; part of every batch-stream label so
    // all variants of one order consume identical batches.
    std::string order_label() const;

    std::string canonical_echo() const;   // deterministic key = value listing
    std::uint64_t content_hash() const;   // FNV-1a over the canonical echo
    std::string hash_hex() const;
};

// Strict parser for `key = value` text: unknown keys, bad values, and a
// missing/mismatched schema_version are all collected into one ConfigError
// listing every offending field.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig parse_config_file(const std::string& path);

// FNV-1a 64 content hash used for run directories and output manifests.
std::uint64_t fnv1a_hash(const std::string& bytes);
std::string hash_hex(std::uint64_t h);

} // namespace lreid
