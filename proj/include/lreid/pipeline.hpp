#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lreid/analysis.hpp"
#include "lreid/config.hpp"
#include "lreid/metrics.hpp"
#include "lreid/model.hpp"
#include "lreid/world.hpp"

namespace lreid {

struct CaspEpochLog {
    int task = 0;
    int epoch = 0;
    double alignment = 0.0;
    double identity = 0.0;
    double total = 0.0;
    double lr = 0.0;
};

struct AkfpEpochLog {
    int task = 0;
    int epoch = 0;
    double l_id = 0.0;
    double l_triplet = 0.0;
    double l_proj = 0.0;
    double l_total = 0.0;
    double state_acc = 0.0;
    double lr = 0.0;
};

struct TaskReport {
    std::string domain;
    std::vector<CaspEpochLog> casp_epochs;
    std::vector<AkfpEpochLog> akfp_epochs;
};

// Epoch CSV renderings (epoch,alignment,identity,total,lr) and
// (epoch,L_id,L_triplet,L_proj,L_total,state_acc,lr).
std::string casp_log_csv(const std::vector<CaspEpochLog>& logs);
std::string akfp_log_csv(const std::vector<AkfpEpochLog>& logs);

// Prompt-learning stage: cosine-decayed epochs over the domain's train pool.
// Only context-encoder, prompt, and text-side head parameters change.
std::vector<CaspEpochLog> casp_train_stage(Model& model, const Domain& domain, const ExperimentConfig& config,
                                           int epochs, int task_index, int cycle);

// Projection stage: warmup-then-decay epochs; updates the adapter, state
// classifier, projection heads, and identity head, and advances the slow
// prototypes once per batch from current prompt embeddings.
std::vector<AkfpEpochLog> akfp_train_stage(Model& model, const Domain& domain, const ExperimentConfig& config,
                                           int epochs, int task_index, int cycle);

// One task: expand the identity head, then alternate the two stages.
TaskReport run_task(Model& model, const Domain& domain, const ExperimentConfig& config, int task_index);

struct SequenceResult {
    SeenDomainMatrix matrix;
    std::vector<TaskReport> tasks;
    std::vector<std::pair<std::string, DomainMetrics>> heldout;
    AnalysisReport analysis;
    Model model;
};

// Full lifelong run over the configured order: train each task, evaluate on
// every seen domain after it, then (optionally) on the held-out domains.
SequenceResult run_sequence(const ExperimentConfig& config, const World* prebuilt_world = nullptr);

// Schema-versioned structured-text checkpoint with decimal-exact values.
// save -> load -> save is byte-identical, and training continues bit-exactly.
void save_checkpoint(const Model& model, const ExperimentConfig& config,
                     const std::vector<TaskReport>& task_logs, const std::string& path);

struct LoadedCheckpoint {
    ExperimentConfig config;
    Model model;
    std::vector<TaskReport> task_logs;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

} // namespace lreid
