#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "lreid/encoders.hpp"
#include "lreid/projection.hpp"
#include "lreid/prompts.hpp"
#include "lreid/world.hpp"

namespace lreid {

enum class Variant { Full, Sft, NoCasp, NoCtx, NoAkfp, NoLproj, SinglePrototype };

Variant variant_from_string(const std::string& name); // throws ConfigError on unknown names
const char* to_string(Variant v);

struct ModelSettings {
    double temperature = 0.07; // contrastive alignment temperature
    double lambda = 0.5;       // projection loss weight
    double margin = 0.3;       // triplet margin
    double beta_s = 0.001;     // slow-learner momentum (both states)
    double state_ce_weight = 0.1; // auxiliary state-classification weight; 0 disables
    bool share_base_prompts = true;
    bool reset_prototypes_per_task = false;
    Variant variant = Variant::Full;

    bool runs_prompt_stage() const { return variant != Variant::Sft && variant != Variant::NoCasp; }
    bool uses_context() const { return runs_prompt_stage() && variant != Variant::NoCtx; }
    bool uses_fixed_mod() const { return variant == Variant::NoCasp; }
    bool uses_projection() const { return variant != Variant::Sft && variant != Variant::NoAkfp; }
    double effective_lambda() const {
        if (variant == Variant::Sft || variant == Variant::NoAkfp || variant == Variant::NoLproj) return 0.0;
        return lambda;
    }
    double effective_state_ce_weight() const { return uses_projection() ? state_ce_weight : 0.0; }
};

// Classification head whose column set grows as new identities appear across
// tasks. Old columns are retained and stay trainable.
struct IdentityHead {
    Parameter w; // kFeatureDim x columns
    Parameter b; // 1 x columns
    std::vector<int> ids_by_column;
    std::unordered_map<int, int> column_of;
    std::uint64_t seed = 0;

    void init(std::uint64_t seed_value, const std::string& name_prefix);
    // Registers any unseen ids (in sorted order) with deterministically
    // seeded new columns.
    void ensure_identities(std::vector<int> ids);
    // Rebuilds the head with columns in exactly the given order (checkpoint
    // restore); values are overwritten by the caller afterwards.
    void restore_columns(const std::vector<int>& ids_in_column_order);
    int columns() const { return w.value.cols; }
    int column_for(int identity) const; // throws ProtocolError when absent
    std::vector<Parameter*> parameters() { return {&w, &b}; }
};

struct Model {
    ModelSettings settings;
    std::uint64_t seed = 0;
    int latent_dim = 0;

    VisualEncoder visual;
    TextEncoder text;
    ContextEncoder ctx;
    PromptSet prompts;
    StateClassifier state_cls;
    ProjectionBundle proj;
    StatePrototypes protos;
    IdentityHead id_head;

    // Per-task text-side identity head, rebuilt by begin_task.
    Parameter casp_head_w, casp_head_b;
    std::vector<int> casp_task_ids; // identity covered at local label = position
    std::unordered_map<int, int> casp_label_of;

    void init(std::uint64_t seed_value, int latent_dimension, const ModelSettings& model_settings);

    // Expands the identity head, installs a fresh text-side head for the
    // task's identities, and applies per-task reset switches.
    void begin_task(const Domain& domain);
    void install_casp_head(const std::vector<int>& identity_ids, const std::string& task_label);

    Vec encode_visual(const SyntheticSample& sample) const;
    // Context vector honoring the variant (zeros when context is disabled).
    Vec context_for(const Vec& feature) const;
    // Modulation tokens honoring the variant (frozen tokens for fixed prompts).
    Matrix modulation_for(const Vec& context) const;
    // Full prompt-conditioned text embedding for one sample (inference path).
    Vec casp_embedding(const SyntheticSample& sample) const;

    // Fixed reference embeddings for the two clothing-state concepts; used to
    // initialize prototypes and for prompt-similarity analysis.
    Matrix concept_tokens(ClothState s) const;
    Vec concept_embedding(ClothState s) const;
    void reset_prototypes();

    std::vector<Parameter*> prompt_stage_parameters(); // context encoder + prompts + text-side head
    std::vector<Parameter*> projection_stage_parameters(); // adapter + classifier + heads + identity head
    std::vector<Parameter*> all_parameters(); // checkpoint surface
    std::vector<const Parameter*> all_parameters() const;
};

struct CaspLossReport {
    double alignment = 0.0;
    double identity = 0.0;
    double total = 0.0;
};

// Identity-supervised symmetric contrastive alignment between visual
// features and prompt embeddings, plus a text-side identity cross-entropy.
// The visual adapter is frozen on this path: no gradient reaches it.
CaspLossReport casp_stage_loss(Model& model, const std::vector<SyntheticSample>& batch, bool with_grad);

struct AkfpLossReport {
    double l_id = 0.0;
    double l_triplet = 0.0;
    double l_proj = 0.0;
    double l_state = 0.0;
    double total = 0.0;     // l_id + l_triplet + lambda * l_proj
    double objective = 0.0; // total + state_ce_weight * l_state (training target)
    double state_accuracy = 0.0;
};

// Projection-stage objective over a batch; accumulates gradients into the
// adapter, state classifier, projection heads, and identity head.
AkfpLossReport akfp_stage_loss(Model& model, const std::vector<SyntheticSample>& batch, bool with_grad);

struct TotalLossReport {
    double l_id = 0.0;
    double l_triplet = 0.0;
    double l_proj = 0.0;
    double l_total = 0.0;
};

// Forward-only evaluation of the combined objective components.
TotalLossReport total_loss(Model& model, const std::vector<SyntheticSample>& batch);

} // namespace lreid
