#include "lreid/prompts.hpp"

#include <cmath>

#include "lreid/errors.hpp"

namespace lreid {

void ContextEncoder::init(Rng root) {
    attn = Parameter("ctx.attn", 1, kChunkWidth);
    attn.init_gaussian(root.stream("ctx/attn"), 0.2);
    m1_w = Parameter("ctx.mlp1.w", kChunkWidth, kContextDim);
    m1_w.init_gaussian(root.stream("ctx/m1_w"), 1.0 / std::sqrt(kChunkWidth));
    m1_b = Parameter("ctx.mlp1.b", 1, kContextDim, false);
    m2_w = Parameter("ctx.mlp2.w", kContextDim, kContextDim);
    m2_w.init_gaussian(root.stream("ctx/m2_w"), 1.0 / std::sqrt(kContextDim));
    m2_b = Parameter("ctx.mlp2.b", 1, kContextDim, false);
}

Vec ContextEncoder::forward(const Vec& feature, Cache* cache) const {
    if (static_cast<int>(feature.size()) != kFeatureDim)
        throw ShapeError("ContextEncoder: feature width " + std::to_string(feature.size()) +
                         " does not match " + std::to_string(kFeatureDim));
    Vec scores(static_cast<std::size_t>(kChunks));
    for (int k = 0; k < kChunks; ++k) {
        double s = 0.0;
        for (int w = 0; w < kChunkWidth; ++w)
            s += attn.value.at(0, w) * feature[static_cast<std::size_t>(k * kChunkWidth + w)];
        scores[static_cast<std::size_t>(k)] = s;
    }
    const Vec weights = softmax_vec(scores);
    Vec pooled(static_cast<std::size_t>(kChunkWidth), 0.0);
    for (int k = 0; k < kChunks; ++k)
        for (int w = 0; w < kChunkWidth; ++w)
            pooled[static_cast<std::size_t>(w)] +=
                weights[static_cast<std::size_t>(k)] * feature[static_cast<std::size_t>(k * kChunkWidth + w)];

    Vec hidden(static_cast<std::size_t>(kContextDim));
    for (int j = 0; j < kContextDim; ++j) {
        double s = m1_b.value.at(0, j);
        for (int w = 0; w < kChunkWidth; ++w) s += pooled[static_cast<std::size_t>(w)] * m1_w.value.at(w, j);
        hidden[static_cast<std::size_t>(j)] = std::tanh(s);
    }
    Vec context(static_cast<std::size_t>(kContextDim));
    for (int j = 0; j < kContextDim; ++j) {
        double s = m2_b.value.at(0, j);
        for (int w = 0; w < kContextDim; ++w) s += hidden[static_cast<std::size_t>(w)] * m2_w.value.at(w, j);
        context[static_cast<std::size_t>(j)] = s;
    }
    if (cache) {
        cache->feature = feature;
        cache->scores = scores;
        cache->weights = weights;
        cache->pooled = pooled;
        cache->hidden = hidden;
        cache->context = context;
    }
    return context;
}

void ContextEncoder::backward(const Cache& cache, const Vec& dcontext) {
    Vec dhidden(static_cast<std::size_t>(kContextDim), 0.0);
    for (int w = 0; w < kContextDim; ++w) {
        double s = 0.0;
        for (int j = 0; j < kContextDim; ++j) {
            m2_w.grad.at(w, j) += cache.hidden[static_cast<std::size_t>(w)] * dcontext[static_cast<std::size_t>(j)];
            s += m2_w.value.at(w, j) * dcontext[static_cast<std::size_t>(j)];
        }
        dhidden[static_cast<std::size_t>(w)] = s;
    }
    for (int j = 0; j < kContextDim; ++j) m2_b.grad.at(0, j) += dcontext[static_cast<std::size_t>(j)];

    Vec dpooled(static_cast<std::size_t>(kChunkWidth), 0.0);
    for (int j = 0; j < kContextDim; ++j) {
        const double h = cache.hidden[static_cast<std::size_t>(j)];
        const double dpre = dhidden[static_cast<std::size_t>(j)] * (1.0 - h * h);
        m1_b.grad.at(0, j) += dpre;
        for (int w = 0; w < kChunkWidth; ++w) {
            m1_w.grad.at(w, j) += cache.pooled[static_cast<std::size_t>(w)] * dpre;
            dpooled[static_cast<std::size_t>(w)] += m1_w.value.at(w, j) * dpre;
        }
    }

    Vec dweights(static_cast<std::size_t>(kChunks), 0.0);
    for (int k = 0; k < kChunks; ++k) {
        double s = 0.0;
        for (int w = 0; w < kChunkWidth; ++w)
            s += cache.feature[static_cast<std::size_t>(k * kChunkWidth + w)] * dpooled[static_cast<std::size_t>(w)];
        dweights[static_cast<std::size_t>(k)] = s;
    }
    const Vec dscores = softmax_backward_vec(cache.weights, dweights);
    for (int k = 0; k < kChunks; ++k)
        for (int w = 0; w < kChunkWidth; ++w)
            attn.grad.at(0, w) +=
                dscores[static_cast<std::size_t>(k)] * cache.feature[static_cast<std::size_t>(k * kChunkWidth + w)];

    for (Parameter* p : parameters()) p->grad_ready = true;
}

std::vector<Parameter*> ContextEncoder::parameters() {
    return {&attn, &m1_w, &m1_b, &m2_w, &m2_b};
}

void PromptSet::init(Rng root) {
    base = Parameter("prompts.base", kBaseTokens, kTokenWidth, false);
    base.init_gaussian(root.stream("prompts/base"), 0.5);
    seeds = Parameter("prompts.seeds", kModTokens, kTokenWidth, false);
    seeds.init_gaussian(root.stream("prompts/seeds"), 0.2);

    const int c = ContextEncoder::kContextDim;
    g1_w = Parameter("prompts.gamma1.w", c, kTokenWidth);
    g1_w.init_gaussian(root.stream("prompts/g1_w"), 1.0 / std::sqrt(c));
    g1_b = Parameter("prompts.gamma1.b", 1, kTokenWidth, false);
    g2_w = Parameter("prompts.gamma2.w", kTokenWidth, kTokenWidth);
    g2_w.init_gaussian(root.stream("prompts/g2_w"), 1.0 / std::sqrt(kTokenWidth));
    g2_b = Parameter("prompts.gamma2.b", 1, kTokenWidth, false);
    // gamma starts near 1 so modulation begins close to the pooled base token
    for (int j = 0; j < kTokenWidth; ++j) g2_b.value.at(0, j) = 1.0;
    d1_w = Parameter("prompts.delta1.w", c, kTokenWidth);
    d1_w.init_gaussian(root.stream("prompts/d1_w"), 1.0 / std::sqrt(c));
    d1_b = Parameter("prompts.delta1.b", 1, kTokenWidth, false);
    d2_w = Parameter("prompts.delta2.w", kTokenWidth, kTokenWidth);
    d2_w.init_gaussian(root.stream("prompts/d2_w"), 1.0 / std::sqrt(kTokenWidth));
    d2_b = Parameter("prompts.delta2.b", 1, kTokenWidth, false);

    fixed_mod = Matrix(kModTokens, kTokenWidth);
    Rng frng = root.stream("prompts/fixed_mod");
    for (double& v : fixed_mod.data) v = frng.gaussian(0.0, 0.5);
}

namespace {

// y = tanh(x W1 + b1) W2 + b2 for a single row vector x.
void head_forward(const Vec& x, const Parameter& w1, const Parameter& b1, const Parameter& w2,
                  const Parameter& b2, Vec& hidden, Vec& out) {
    const int mid = w1.value.cols;
    const int outw = w2.value.cols;
    hidden.assign(static_cast<std::size_t>(mid), 0.0);
    for (int j = 0; j < mid; ++j) {
        double s = b1.value.at(0, j);
        for (int i = 0; i < w1.value.rows; ++i) s += x[static_cast<std::size_t>(i)] * w1.value.at(i, j);
        hidden[static_cast<std::size_t>(j)] = std::tanh(s);
    }
    out.assign(static_cast<std::size_t>(outw), 0.0);
    for (int j = 0; j < outw; ++j) {
        double s = b2.value.at(0, j);
        for (int i = 0; i < mid; ++i) s += hidden[static_cast<std::size_t>(i)] * w2.value.at(i, j);
        out[static_cast<std::size_t>(j)] = s;
    }
}

// Accumulates head gradients from dL/dout; adds dL/dx into dx.
void head_backward(const Vec& x, Parameter& w1, Parameter& b1, Parameter& w2, Parameter& b2,
                   const Vec& hidden, const Vec& dout, Vec& dx) {
    const int mid = w1.value.cols;
    const int outw = w2.value.cols;
    Vec dhidden(static_cast<std::size_t>(mid), 0.0);
    for (int i = 0; i < mid; ++i) {
        double s = 0.0;
        for (int j = 0; j < outw; ++j) {
            w2.grad.at(i, j) += hidden[static_cast<std::size_t>(i)] * dout[static_cast<std::size_t>(j)];
            s += w2.value.at(i, j) * dout[static_cast<std::size_t>(j)];
        }
        dhidden[static_cast<std::size_t>(i)] = s;
    }
    for (int j = 0; j < outw; ++j) b2.grad.at(0, j) += dout[static_cast<std::size_t>(j)];
    for (int j = 0; j < mid; ++j) {
        const double h = hidden[static_cast<std::size_t>(j)];
        const double dpre = dhidden[static_cast<std::size_t>(j)] * (1.0 - h * h);
        b1.grad.at(0, j) += dpre;
        for (int i = 0; i < w1.value.rows; ++i) {
            w1.grad.at(i, j) += x[static_cast<std::size_t>(i)] * dpre;
            dx[static_cast<std::size_t>(i)] += w1.value.at(i, j) * dpre;
        }
    }
    w1.grad_ready = b1.grad_ready = w2.grad_ready = b2.grad_ready = true;
}

} // namespace

Matrix PromptSet::modulate(const Vec& context, ModCache* cache) const {
    if (static_cast<int>(context.size()) != ContextEncoder::kContextDim)
        throw ShapeError("PromptSet::modulate: context width " + std::to_string(context.size()) +
                         " does not match " + std::to_string(ContextEncoder::kContextDim));
    Vec pool(static_cast<std::size_t>(kTokenWidth), 0.0);
    for (int i = 0; i < kBaseTokens; ++i)
        for (int j = 0; j < kTokenWidth; ++j) pool[static_cast<std::size_t>(j)] += base.value.at(i, j);
    for (double& v : pool) v /= kBaseTokens;

    Vec gamma_hidden, gamma, delta_hidden, delta;
    head_forward(context, g1_w, g1_b, g2_w, g2_b, gamma_hidden, gamma);
    head_forward(context, d1_w, d1_b, d2_w, d2_b, delta_hidden, delta);

    Matrix mod(kModTokens, kTokenWidth);
    for (int t = 0; t < kModTokens; ++t)
        for (int j = 0; j < kTokenWidth; ++j)
            mod.at(t, j) = gamma[static_cast<std::size_t>(j)] * pool[static_cast<std::size_t>(j)] +
                           delta[static_cast<std::size_t>(j)] + seeds.value.at(t, j);
    if (cache) {
        cache->context = context;
        cache->pool = pool;
        cache->gamma_hidden = gamma_hidden;
        cache->gamma = gamma;
        cache->delta_hidden = delta_hidden;
        cache->delta = delta;
    }
    return mod;
}

Vec PromptSet::modulate_backward(const ModCache& cache, const Matrix& dmod) {
    Vec dsum(static_cast<std::size_t>(kTokenWidth), 0.0);
    for (int t = 0; t < kModTokens; ++t)
        for (int j = 0; j < kTokenWidth; ++j) {
            seeds.grad.at(t, j) += dmod.at(t, j);
            dsum[static_cast<std::size_t>(j)] += dmod.at(t, j);
        }
    seeds.grad_ready = true;

    Vec dgamma(static_cast<std::size_t>(kTokenWidth));
    Vec ddelta = dsum;
    Vec dpool(static_cast<std::size_t>(kTokenWidth));
    for (int j = 0; j < kTokenWidth; ++j) {
        dgamma[static_cast<std::size_t>(j)] = dsum[static_cast<std::size_t>(j)] * cache.pool[static_cast<std::size_t>(j)];
        dpool[static_cast<std::size_t>(j)] = dsum[static_cast<std::size_t>(j)] * cache.gamma[static_cast<std::size_t>(j)];
    }
    for (int i = 0; i < kBaseTokens; ++i)
        for (int j = 0; j < kTokenWidth; ++j)
            base.grad.at(i, j) += dpool[static_cast<std::size_t>(j)] / kBaseTokens;
    base.grad_ready = true;

    Vec dcontext(static_cast<std::size_t>(ContextEncoder::kContextDim), 0.0);
    head_backward(cache.context, g1_w, g1_b, g2_w, g2_b, cache.gamma_hidden, dgamma, dcontext);
    head_backward(cache.context, d1_w, d1_b, d2_w, d2_b, cache.delta_hidden, ddelta, dcontext);
    return dcontext;
}

Matrix PromptSet::assemble(const Matrix& mod) const {
    if (mod.rows != kModTokens || mod.cols != kTokenWidth)
        throw ShapeError("PromptSet::assemble: modulation block " + mod.shape_str() + " has the wrong shape");
    Matrix tokens(kBaseTokens + kModTokens, kTokenWidth);
    for (int i = 0; i < kBaseTokens; ++i)
        for (int j = 0; j < kTokenWidth; ++j) tokens.at(i, j) = base.value.at(i, j);
    for (int i = 0; i < kModTokens; ++i)
        for (int j = 0; j < kTokenWidth; ++j) tokens.at(kBaseTokens + i, j) = mod.at(i, j);
    return tokens;
}

std::vector<Parameter*> PromptSet::parameters() {
    return {&base, &seeds, &g1_w, &g1_b, &g2_w, &g2_b, &d1_w, &d1_b, &d2_w, &d2_b};
}

} // namespace lreid
