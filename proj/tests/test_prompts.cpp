#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "lreid/errors.hpp"
#include "lreid/gradcheck.hpp"
#include "lreid/model.hpp"
#include "lreid/optim.hpp"
#include "lreid/prompts.hpp"
#include "lreid/world.hpp"

using namespace lreid;

namespace {

Vec random_feature(Rng rng) {
    Vec f(static_cast<std::size_t>(kFeatureDim));
    for (double& v : f) v = rng.gaussian();
    return f;
}

struct Fixture {
    World world = build_world(42);
    Model model;
    Fixture() {
        model.init(42, world.config.latent_dim(), ModelSettings{});
        model.begin_task(world.seen[0]);
    }
    std::vector<SyntheticSample> batch8() {
        Rng rng = Rng(42).stream("test/batch8");
        return sample_pk_batch(world.seen[0], 4, 2, rng);
    }
};

} // namespace

TEST_CASE("uniform attention reduces the context to an MLP of the token mean") {
    ContextEncoder ctx;
    ctx.init(Rng(3).stream("ctx"));
    ctx.attn.value.fill(0.0); // all scores equal -> uniform weights
    const Vec f = random_feature(Rng(5).stream("f"));

    ContextEncoder::Cache cache;
    const Vec c = ctx.forward(f, &cache);
    for (double w : cache.weights) CHECK(w == doctest::Approx(1.0 / ContextEncoder::kChunks));

    // mean pseudo-token fed straight through the MLP
    Vec mean(ContextEncoder::kChunkWidth, 0.0);
    for (int k = 0; k < ContextEncoder::kChunks; ++k)
        for (int w = 0; w < ContextEncoder::kChunkWidth; ++w)
            mean[static_cast<std::size_t>(w)] += f[static_cast<std::size_t>(k * ContextEncoder::kChunkWidth + w)] /
                                                 ContextEncoder::kChunks;
    Vec hidden(ContextEncoder::kContextDim);
    for (int j = 0; j < ContextEncoder::kContextDim; ++j) {
        double s = ctx.m1_b.value.at(0, j);
        for (int w = 0; w < ContextEncoder::kChunkWidth; ++w) s += mean[static_cast<std::size_t>(w)] * ctx.m1_w.value.at(w, j);
        hidden[static_cast<std::size_t>(j)] = std::tanh(s);
    }
    for (int j = 0; j < ContextEncoder::kContextDim; ++j) {
        double s = ctx.m2_b.value.at(0, j);
        for (int w = 0; w < ContextEncoder::kContextDim; ++w) s += hidden[static_cast<std::size_t>(w)] * ctx.m2_w.value.at(w, j);
        CHECK(c[static_cast<std::size_t>(j)] == doctest::Approx(s).epsilon(1e-12));
    }

    CHECK(ctx.forward(f) == ctx.forward(f)); // deterministic
}

TEST_CASE("attention weights always form a distribution") {
    Rng rng(17);
    for (int it = 0; it < 200; ++it) {
        ContextEncoder ctx;
        ctx.init(Rng(rng.next_u64()).stream("ctx"));
        const Vec f = random_feature(Rng(rng.next_u64()).stream("f"));
        ContextEncoder::Cache cache;
        ctx.forward(f, &cache);
        double sum = 0.0;
        for (double w : cache.weights) {
            CHECK(w >= 0.0);
            sum += w;
        }
        CHECK(std::abs(sum - 1.0) < 1e-9);
    }
}

TEST_CASE("context gradients pass finite differences through the attention softmax") {
    ContextEncoder ctx;
    ctx.init(Rng(23).stream("ctx"));
    const Vec f = random_feature(Rng(29).stream("f"));
    auto loss = [&](bool with_grad) {
        ContextEncoder::Cache cache;
        const Vec c = ctx.forward(f, &cache);
        double l = 0.0;
        for (double v : c) l += 0.5 * v * v;
        if (with_grad) ctx.backward(cache, c);
        return l;
    };
    auto report = finite_diff_check(loss, ctx.parameters(), Rng(31).stream("gc"), {});
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("identity modulation returns the pooled base token") {
    PromptSet prompts;
    prompts.init(Rng(37).stream("p"));
    prompts.g2_w.value.fill(0.0);
    prompts.g2_b.value.fill(1.0); // gamma == 1
    prompts.d2_w.value.fill(0.0);
    prompts.d2_b.value.fill(0.0); // delta == 0
    prompts.seeds.value.fill(0.0);

    const Vec c = Vec(ContextEncoder::kContextDim, 0.3);
    const Matrix mod = prompts.modulate(c);
    Vec pool(kTokenWidth, 0.0);
    for (int i = 0; i < PromptSet::kBaseTokens; ++i)
        for (int j = 0; j < kTokenWidth; ++j) pool[static_cast<std::size_t>(j)] += prompts.base.value.at(i, j) / PromptSet::kBaseTokens;
    for (int t = 0; t < PromptSet::kModTokens; ++t)
        for (int j = 0; j < kTokenWidth; ++j)
            CHECK(mod.at(t, j) == doctest::Approx(pool[static_cast<std::size_t>(j)]).epsilon(1e-12));
}

TEST_CASE("different contexts produce different modulation tokens") {
    PromptSet prompts;
    prompts.init(Rng(41).stream("p"));
    Rng rng(43);
    Vec c1(ContextEncoder::kContextDim), c2(ContextEncoder::kContextDim);
    for (double& v : c1) v = rng.gaussian();
    for (double& v : c2) v = rng.gaussian();
    const Matrix m1 = prompts.modulate(c1);
    const Matrix m2 = prompts.modulate(c2);
    CHECK(m1.data != m2.data);
}

TEST_CASE("modulation gradients w.r.t. the context pass finite differences") {
    PromptSet prompts;
    prompts.init(Rng(47).stream("p"));
    Parameter c("c", 1, ContextEncoder::kContextDim, false);
    c.init_gaussian(Rng(53).stream("c"), 1.0);
    auto loss = [&](bool with_grad) {
        PromptSet::ModCache cache;
        const Matrix mod = prompts.modulate(c.value.row(0), &cache);
        double l = 0.0;
        for (double v : mod.data) l += 0.5 * v * v;
        if (with_grad) {
            const Vec dc = prompts.modulate_backward(cache, mod);
            for (int j = 0; j < ContextEncoder::kContextDim; ++j) c.grad.at(0, j) += dc[static_cast<std::size_t>(j)];
            c.grad_ready = true;
        }
        return l;
    };
    auto report = finite_diff_check(loss, {&c}, Rng(59).stream("gc"), {});
    CHECK(report.max_rel_error < 1e-4);
    // and w.r.t. the prompt parameters themselves
    auto report2 = finite_diff_check(loss, prompts.parameters(), Rng(61).stream("gc2"), {});
    CHECK(report2.max_rel_error < 1e-4);
}

TEST_CASE("prompt embedding pipeline is deterministic and reduces under identity modulation") {
    Fixture fx;
    const auto& sample = fx.world.seen[0].train_samples[5];
    const Vec e1 = fx.model.casp_embedding(sample);
    const Vec e2 = fx.model.casp_embedding(sample);
    CHECK(e1 == e2);

    // identity modulation: embedding equals the text encoding of the base tokens alone
    Model m2;
    m2.init(42, fx.world.config.latent_dim(), ModelSettings{});
    m2.begin_task(fx.world.seen[0]);
    m2.prompts.g2_w.value.fill(0.0);
    m2.prompts.g2_b.value.fill(1.0);
    m2.prompts.d2_w.value.fill(0.0);
    m2.prompts.d2_b.value.fill(0.0);
    m2.prompts.seeds.value.fill(0.0);
    const Vec full = m2.casp_embedding(sample);
    const Vec base_only = m2.text.forward(m2.prompts.base.value);
    REQUIRE(full.size() == base_only.size());
    for (std::size_t i = 0; i < full.size(); ++i)
        CHECK(full[i] == doctest::Approx(base_only[i]).epsilon(1e-12));
}

TEST_CASE("uninformative embeddings with a fresh head give log(identities)") {
    Fixture fx;
    fx.model.casp_head_w.value.fill(0.0);
    fx.model.casp_head_b.value.fill(0.0);
    const auto batch = fx.batch8();
    const CaspLossReport report = casp_stage_loss(fx.model, batch, false);
    CHECK(report.identity == doctest::Approx(std::log(static_cast<double>(fx.model.casp_task_ids.size()))));
    CHECK(report.alignment >= 0.0);
    CHECK(report.total == doctest::Approx(report.alignment + report.identity));
}

TEST_CASE("prompt stage loss rejects single-identity batches") {
    Fixture fx;
    auto batch = fx.batch8();
    for (auto& s : batch) s.identity = batch.front().identity;
    CHECK_THROWS_AS(casp_stage_loss(fx.model, batch, false), ProtocolError);
}

TEST_CASE("prompt stage loss decreases over twenty optimizer steps") {
    Fixture fx;
    Rng rng = Rng(42).stream("test/casp-steps");
    const auto batch = sample_pk_batch(fx.world.seen[0], 8, 4, rng);
    auto params = fx.model.prompt_stage_parameters();
    OptimizerState opt;
    double first = 0.0, last = 0.0;
    for (int step = 0; step < 20; ++step) {
        for (Parameter* p : params) p->zero_grad();
        const CaspLossReport r = casp_stage_loss(fx.model, batch, true);
        if (step == 0) first = r.alignment;
        last = r.alignment;
        adam_step(params, opt, 2e-3);
    }
    CHECK(last < first);
}

TEST_CASE("full prompt stage loss passes finite differences on an 8-sample batch") {
    Fixture fx;
    const auto batch = fx.batch8();
    auto params = fx.model.prompt_stage_parameters();
    auto loss = [&](bool with_grad) { return casp_stage_loss(fx.model, batch, with_grad).total; };
    auto report = finite_diff_check(loss, params, Rng(67).stream("gc"), {});
    INFO("worst ", report.worst_param, "[", report.worst_coord, "] rel ", report.max_rel_error);
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("prompt stage leaves adapter and projection parameters untouched") {
    Fixture fx;
    const auto batch = fx.batch8();
    const Matrix a1 = fx.model.visual.a1_w.value;
    const Matrix proj_sc = fx.model.proj.sc.value;
    const Matrix cls_w = fx.model.state_cls.w.value;
    auto params = fx.model.prompt_stage_parameters();
    OptimizerState opt;
    for (int step = 0; step < 5; ++step) {
        for (Parameter* p : params) p->zero_grad();
        casp_stage_loss(fx.model, batch, true);
        adam_step(params, opt, 1e-3);
    }
    CHECK(fx.model.visual.a1_w.value.data == a1.data);
    CHECK(fx.model.proj.sc.value.data == proj_sc.data);
    CHECK(fx.model.state_cls.w.value.data == cls_w.data);
}
