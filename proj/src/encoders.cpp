#include "lreid/encoders.hpp"

#include <algorithm>

#include <cmath>

#include "lreid/errors.hpp"

namespace lreid {

namespace {

void fill_gaussian(Matrix& m, Rng rng, double sigma) {
    for (double& v : m.data) v = rng.gaussian(0.0, sigma);
}

void fill_gaussian(Vec& v, Rng rng, double sigma) {
    for (double& x : v) x = rng.gaussian(0.0, sigma);
}

} // namespace

void VisualEncoder::init(int latent_dimension, Rng root) {
    latent_dim = latent_dimension;
    base_w = Matrix(latent_dim, kFeatureDim);
    fill_gaussian(base_w, root.stream("visual/base_w"), 1.0 / std::sqrt(latent_dim));
    base_b.assign(kFeatureDim, 0.0);
    fill_gaussian(base_b, root.stream("visual/base_b"), 0.1);

    a1_w = Parameter("visual.adapter1.w", kFeatureDim, hidden_dim);
    a1_w.init_gaussian(root.stream("visual/a1_w"), 1.0 / std::sqrt(kFeatureDim));
    a1_b = Parameter("visual.adapter1.b", 1, hidden_dim, false);
    a2_w = Parameter("visual.adapter2.w", hidden_dim, kFeatureDim);
    a2_w.init_gaussian(root.stream("visual/a2_w"), 1.0 / std::sqrt(hidden_dim));
    a2_b = Parameter("visual.adapter2.b", 1, kFeatureDim, false);
}

Matrix VisualEncoder::forward(const Matrix& latents, Cache* cache) const {
    if (latents.cols != latent_dim)
        throw ShapeError("VisualEncoder: latent width " + latents.shape_str() + " does not match encoder input " +
                         std::to_string(latent_dim));
    Matrix base_lin = matmul(latents, base_w);
    for (int i = 0; i < base_lin.rows; ++i)
        for (int j = 0; j < base_lin.cols; ++j) base_lin.at(i, j) += base_b[static_cast<std::size_t>(j)];
    Matrix base_out = tanh_forward(base_lin);

    Matrix h_lin = linear(base_out, a1_w, &a1_b);
    Matrix hidden = tanh_forward(h_lin);
    Matrix features = linear(hidden, a2_w, &a2_b);
    if (cache) {
        cache->base_out = base_out;
        cache->hidden = hidden;
        cache->features = features;
    }
    return features;
}

Vec VisualEncoder::forward_one(const Vec& latent) const {
    Matrix in = Matrix::from_rows({latent});
    return forward(in, nullptr).row(0);
}

void VisualEncoder::backward(const Cache& cache, const Matrix& dfeatures) {
    Matrix dhidden = linear_backward(cache.hidden, a2_w, &a2_b, dfeatures);
    Matrix dh_lin = tanh_backward(cache.hidden, dhidden);
    linear_backward(cache.base_out, a1_w, &a1_b, dh_lin);
}

std::vector<Parameter*> VisualEncoder::parameters() {
    return {&a1_w, &a1_b, &a2_w, &a2_b};
}

std::vector<const Parameter*> VisualEncoder::parameters() const {
    return {&a1_w, &a1_b, &a2_w, &a2_b};
}

void TextEncoder::init(Rng root) {
    lift = Matrix(kTokenWidth, kFeatureDim);
    fill_gaussian(lift, root.stream("text/lift"), 1.0 / std::sqrt(kTokenWidth));
    t1_w = Matrix(kFeatureDim, kFeatureDim);
    fill_gaussian(t1_w, root.stream("text/t1_w"), 1.0 / std::sqrt(kFeatureDim));
    t1_b.assign(kFeatureDim, 0.0);
    fill_gaussian(t1_b, root.stream("text/t1_b"), 0.1);
    t2_w = Matrix(kFeatureDim, kFeatureDim);
    fill_gaussian(t2_w, root.stream("text/t2_w"), 1.0 / std::sqrt(kFeatureDim));
    t2_b.assign(kFeatureDim, 0.0);
    fill_gaussian(t2_b, root.stream("text/t2_b"), 0.1);
}

Vec TextEncoder::forward(const Matrix& tokens, Cache* cache) const {
    if (tokens.rows < 1)
        throw ProtocolError("TextEncoder: empty prompt");
    if (tokens.cols != kTokenWidth)
        throw ShapeError("TextEncoder: token width " + tokens.shape_str() + " does not match " +
                         std::to_string(kTokenWidth));
    // Summing in a canonical (sorted) order makes the pooled mean exactly
    // permutation-invariant, not just up to rounding.
    Vec mean(static_cast<std::size_t>(kTokenWidth), 0.0);
    Vec column(static_cast<std::size_t>(tokens.rows));
    for (int j = 0; j < kTokenWidth; ++j) {
        for (int i = 0; i < tokens.rows; ++i) column[static_cast<std::size_t>(i)] = tokens.at(i, j);
        std::sort(column.begin(), column.end());
        double s = 0.0;
        for (double v : column) s += v;
        mean[static_cast<std::size_t>(j)] = s / tokens.rows;
    }

    Vec lifted(static_cast<std::size_t>(kFeatureDim), 0.0);
    for (int j = 0; j < kTokenWidth; ++j) {
        const double mj = mean[static_cast<std::size_t>(j)];
        if (mj == 0.0) continue;
        const double* row = lift.row_ptr(j);
        for (int k = 0; k < kFeatureDim; ++k) lifted[static_cast<std::size_t>(k)] += mj * row[k];
    }
    Vec hidden(static_cast<std::size_t>(kFeatureDim));
    for (int k = 0; k < kFeatureDim; ++k) {
        double s = t1_b[static_cast<std::size_t>(k)];
        for (int j = 0; j < kFeatureDim; ++j) s += lifted[static_cast<std::size_t>(j)] * t1_w.at(j, k);
        hidden[static_cast<std::size_t>(k)] = std::tanh(s);
    }
    Vec embedding(static_cast<std::size_t>(kFeatureDim));
    for (int k = 0; k < kFeatureDim; ++k) {
        double s = t2_b[static_cast<std::size_t>(k)];
        for (int j = 0; j < kFeatureDim; ++j) s += hidden[static_cast<std::size_t>(j)] * t2_w.at(j, k);
        embedding[static_cast<std::size_t>(k)] = s;
    }
    if (cache) {
        cache->token_count = tokens.rows;
        cache->mean = mean;
        cache->lifted = lifted;
        cache->hidden = hidden;
        cache->embedding = embedding;
    }
    return embedding;
}

Matrix TextEncoder::backward(const Cache& cache, const Vec& dembedding) const {
    Vec dhidden(static_cast<std::size_t>(kFeatureDim), 0.0);
    for (int j = 0; j < kFeatureDim; ++j) {
        double s = 0.0;
        const double* row = t2_w.row_ptr(j);
        for (int k = 0; k < kFeatureDim; ++k) s += dembedding[static_cast<std::size_t>(k)] * row[k];
        dhidden[static_cast<std::size_t>(j)] = s;
    }
    Vec dlifted(static_cast<std::size_t>(kFeatureDim), 0.0);
    for (int j = 0; j < kFeatureDim; ++j) {
        double s = 0.0;
        const double* row = t1_w.row_ptr(j);
        for (int k = 0; k < kFeatureDim; ++k) {
            const double h = cache.hidden[static_cast<std::size_t>(k)];
            s += dhidden[static_cast<std::size_t>(k)] * (1.0 - h * h) * row[k];
        }
        dlifted[static_cast<std::size_t>(j)] = s;
    }
    Vec dmean(static_cast<std::size_t>(kTokenWidth), 0.0);
    for (int j = 0; j < kTokenWidth; ++j) {
        double s = 0.0;
        const double* row = lift.row_ptr(j);
        for (int k = 0; k < kFeatureDim; ++k) s += dlifted[static_cast<std::size_t>(k)] * row[k];
        dmean[static_cast<std::size_t>(j)] = s;
    }
    Matrix dtokens(cache.token_count, kTokenWidth);
    for (int i = 0; i < cache.token_count; ++i)
        for (int j = 0; j < kTokenWidth; ++j)
            dtokens.at(i, j) = dmean[static_cast<std::size_t>(j)] / cache.token_count;
    return dtokens;
}

} // namespace lreid
