#pragma once

#include "lreid/encoders.hpp"
#include "lreid/layers.hpp"
#include "lreid/matrix.hpp"
#include "lreid/rng.hpp"

namespace lreid {

// Splits a visual feature into pseudo-tokens, attends over them with a
// learned score vector, and maps the attention-pooled token to a compact
// context vector describing the image's dominant clothing condition.
struct ContextEncoder {
    static constexpr int kChunks = 8;
    static constexpr int kChunkWidth = kFeatureDim / kChunks;
    static constexpr int kContextDim = 16;

    Parameter attn;       // score vector, width kChunkWidth
    Parameter m1_w, m1_b; // chunk width -> context dim, tanh
    Parameter m2_w, m2_b; // context dim -> context dim

    void init(Rng root);

    struct Cache {
        Vec feature;
        Vec scores;  // per pseudo-token
        Vec weights; // softmax of scores
        Vec pooled;
        Vec hidden;
        Vec context;
    };

    Vec forward(const Vec& feature, Cache* cache = nullptr) const;
    // Accumulates parameter gradients from dL/dcontext. The feature itself is
    // never a training input on this path, so no dfeature is produced.
    void backward(const Cache& cache, const Vec& dcontext);

    std::vector<Parameter*> parameters();
};

// Learnable base tokens plus a FiLM-style generator of modulation tokens:
// each generated token is gamma(c) * mean(base) + delta(c) + per-slot seed.
// Modulation tokens are derived state, recomputed from (base, context) at
// every use and never persisted.
struct PromptSet {
    static constexpr int kBaseTokens = 8;
    static constexpr int kModTokens = 4;

    Parameter base;  // kBaseTokens x kTokenWidth, no weight decay
    Parameter seeds; // kModTokens x kTokenWidth, no weight decay
    Parameter g1_w, g1_b, g2_w, g2_b; // gamma head: context -> token width
    Parameter d1_w, d1_b, d2_w, d2_b; // delta head
    Matrix fixed_mod; // frozen random tokens for the fixed-prompt ablation

    void init(Rng root);

    struct ModCache {
        Vec context;
        Vec pool;
        Vec gamma_hidden, gamma;
        Vec delta_hidden, delta;
    };

    // kModTokens x kTokenWidth generated tokens.
    Matrix modulate(const Vec& context, ModCache* cache = nullptr) const;
    // Accumulates gradients into the heads, seeds, and base (through the
    // pooled-base path); returns dL/dcontext.
    Vec modulate_backward(const ModCache& cache, const Matrix& dmod);

    // [base; mod] stacked for the text encoder.
    Matrix assemble(const Matrix& mod) const;

    std::vector<Parameter*> parameters();
};

} // namespace lreid
