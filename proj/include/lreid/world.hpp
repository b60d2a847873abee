#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "lreid/matrix.hpp"
#include "lreid/rng.hpp"

namespace lreid {

enum class ClothState { SC, CC };

const char* to_string(ClothState s);

struct WorldConfig {
    int identity_dim = 16;  // clothing-invariant body code
    int outfit_dim = 16;    // clothing code
    int noise_dim = 16;     // pose noise block
    int train_identities = 50;
    int eval_identities = 25;
    int train_images_per_identity = 20;
    int eval_images_per_identity = 10;
    int outfits_per_cc_identity = 4; // >= 2 required by the cloth-changing protocol
    double outfit_sigma = 0.6;
    double pose_sigma = 0.3;
    double state_signal = 2.0;       // magnitude of the state-dependent mean in the noise block
    double domain_offset_sigma = 0.8;
    double domain_scale_lo = 0.7;
    double domain_scale_hi = 1.3;

    int latent_dim() const { return identity_dim + outfit_dim + noise_dim; }
};

struct Identity {
    int id = 0; // globally unique across the world
    Vec core;
};

struct Outfit {
    int outfit_id = 0;
    Vec code;
};

// One "image": a shifted latent with identity, outfit, domain, and
// ground-truth clothing-state labels.
struct SyntheticSample {
    Vec latent;
    int identity = 0;
    int outfit = 0;
    int domain_index = 0;
    std::string domain;
    ClothState state = ClothState::SC;
};

struct Domain {
    std::string name;
    int index = 0;
    ClothState state_kind = ClothState::SC;
    Matrix shift_rotation;  // orthogonal
    Vec shift_scale;        // per-coordinate diagonal scaling
    Vec shift_offset;
    std::vector<Identity> train_identities;
    std::vector<Identity> eval_identities;
    std::vector<SyntheticSample> train_samples; // grouped by identity, images contiguous
    std::vector<SyntheticSample> eval_samples;
};

struct World {
    std::uint64_t seed = 0;
    WorldConfig config;
    std::vector<Domain> seen;    // SC1, CC1, SC2, CC2
    std::vector<Domain> heldout; // SCH, CCH
};

struct LearningOrder {
    int id = 0;                        // 1-based, matching the built-in table
    std::array<int, 4> domain_indices; // into World::seen
};

struct EvalSplit {
    std::vector<SyntheticSample> queries;
    std::vector<SyntheticSample> gallery;
    bool cloth_changing_protocol = false;
};

// Deterministic world: 4 seen domains (2 SC, 2 CC) plus 2 held-out domains
// sharing no identities with the seen ones. Same seed, same bits.
World build_world(std::uint64_t seed, const WorldConfig& config = {});

// P distinct identities, K images each, drawn from the domain's train pool.
std::vector<SyntheticSample> sample_pk_batch(const Domain& domain, int num_identities, int images_per_identity,
                                             Rng& rng);

// Query/gallery split over the eval identities. Cloth-changing domains are
// built so no (query, gallery) pair of the same identity shares an outfit.
EvalSplit eval_split(const Domain& domain);

// The six built-in task orders over the seen domains.
std::vector<LearningOrder> builtin_orders();

// 50/50 interpolations of SC and CC eval latents, used only for analysis of
// ambiguous inputs; these have no ground-truth state.
std::vector<Vec> mixed_analysis_latents(const World& world, int count);

// Schema-versioned descriptor sufficient to regenerate the world bit-identically.
std::string world_descriptor(const World& world);
World world_from_descriptor(const std::string& text);

} // namespace lreid
