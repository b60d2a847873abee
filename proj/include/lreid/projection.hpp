#pragma once

#include <vector>

#include "lreid/encoders.hpp"
#include "lreid/layers.hpp"
#include "lreid/matrix.hpp"
#include "lreid/rng.hpp"
#include "lreid/world.hpp"

namespace lreid {

// Slow-learned text prototypes, one per clothing state. Updated only through
// update_prototypes; they never receive optimizer gradients. In the
// single-prototype ablation `sc` holds the one shared prototype.
struct StatePrototypes {
    Vec sc;
    Vec cc;
    double beta_sc = 0.001;
    double beta_cc = 0.001;
    bool single = false;

    const Vec& prototype_for(ClothState s) const { return single || s == ClothState::SC ? sc : cc; }
};

// For each state with at least one embedding in the batch:
//   T_s <- (1 - beta_s) T_s + beta_s * mean(embeddings of state s).
// States absent from the batch keep their prototype unchanged. The single
// prototype pools both states into one mean.
void update_prototypes(StatePrototypes& protos, const std::vector<Vec>& embeddings,
                       const std::vector<ClothState>& states);

struct StateClassifier {
    Parameter w; // kFeatureDim x 2
    Parameter b; // 1 x 2

    void init(Rng root);
    std::vector<Parameter*> parameters() { return {&w, &b}; }
};

// Two-way distribution (p_SC, p_CC) over clothing states.
Vec classify_state(const StateClassifier& classifier, const Vec& feature);

// Per-state linear projection heads (no bias), initialized near identity so
// the projected feature starts close to the visual feature.
struct ProjectionBundle {
    Parameter sc; // kFeatureDim x kFeatureDim
    Parameter cc;

    void init(Rng root, double noise_sigma = 0.01);
    std::vector<Parameter*> parameters() { return {&sc, &cc}; }
};

// f_proj = s_hat[0] * W_sc f + s_hat[1] * W_cc f. s_hat must sum to 1 within
// 1e-6 or a ContractError is thrown.
Vec project(const Vec& feature, const Vec& state_probs, const ProjectionBundle& bundle);

// Mean cosine distance between each projected feature and its ground-truth
// state's prototype; prototypes are constants (no gradient flows into them).
double projection_loss(const std::vector<Vec>& projected, const std::vector<ClothState>& states,
                       const StatePrototypes& protos);

} // namespace lreid
