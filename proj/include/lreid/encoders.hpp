#pragma once

#include <vector>

#include "lreid/layers.hpp"
#include "lreid/matrix.hpp"
#include "lreid/rng.hpp"
#include "lreid/world.hpp"

namespace lreid {

inline constexpr int kFeatureDim = 64;
inline constexpr int kTokenWidth = 32;

// Frozen backbone plus a trainable 2-layer adapter (tanh hidden). Only the
// adapter ever receives gradients; the backbone stays at its seeded values.
struct VisualEncoder {
    int latent_dim = 0;
    int hidden_dim = 96;
    // frozen backbone: latent -> kFeatureDim, tanh output
    Matrix base_w;
    Vec base_b;
    // trainable adapter: kFeatureDim -> hidden -> kFeatureDim
    Parameter a1_w, a1_b;
    Parameter a2_w, a2_b;

    void init(int latent_dimension, Rng root);

    struct Cache {
        Matrix base_out; // backbone activations (constant w.r.t. training)
        Matrix hidden;   // tanh activations
        Matrix features;
    };

    // Batch forward; rows of `latents` are samples.
    Matrix forward(const Matrix& latents, Cache* cache = nullptr) const;
    Vec forward_one(const Vec& latent) const;
    // Accumulates adapter gradients from dL/dfeatures. The backbone is frozen,
    // so backpropagation stops at its output.
    void backward(const Cache& cache, const Matrix& dfeatures);

    std::vector<Parameter*> parameters();
    std::vector<const Parameter*> parameters() const;
};

// Frozen text stub: mean-pool over tokens, a fixed linear lift from token
// width to feature width, then a fixed random 2-layer MLP. Differentiable in
// the token values so prompt learning receives gradients, but its own
// weights never train. Mean pooling makes it exactly permutation-invariant.
struct TextEncoder {
    Matrix lift; // kTokenWidth -> kFeatureDim
    Matrix t1_w;
    Vec t1_b;
    Matrix t2_w;
    Vec t2_b;

    void init(Rng root);

    struct Cache {
        int token_count = 0;
        Vec mean;   // pooled token
        Vec lifted;
        Vec hidden; // tanh activations
        Vec embedding;
    };

    // tokens: one row per token, width kTokenWidth.
    Vec forward(const Matrix& tokens, Cache* cache = nullptr) const;
    // Returns dL/dtokens (uniform across tokens by linearity of the mean).
    Matrix backward(const Cache& cache, const Vec& dembedding) const;
};

} // namespace lreid
