#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "lreid/errors.hpp"
#include "lreid/gradcheck.hpp"
#include "lreid/model.hpp"
#include "lreid/optim.hpp"
#include "lreid/projection.hpp"
#include "lreid/world.hpp"

using namespace lreid;

namespace {

Vec unit(int dim, int axis) {
    Vec v(static_cast<std::size_t>(dim), 0.0);
    v[static_cast<std::size_t>(axis)] = 1.0;
    return v;
}

} // namespace

TEST_CASE("prototype updates follow the momentum formula") {
    StatePrototypes p;
    p.sc = unit(4, 0);
    p.cc = unit(4, 1);

    SUBCASE("beta zero leaves prototypes unchanged") {
        p.beta_sc = p.beta_cc = 0.0;
        update_prototypes(p, {Vec{5, 5, 5, 5}, Vec{7, 7, 7, 7}}, {ClothState::SC, ClothState::CC});
        CHECK(p.sc == unit(4, 0));
        CHECK(p.cc == unit(4, 1));
    }
    SUBCASE("beta one replaces with the batch mean") {
        p.beta_sc = p.beta_cc = 1.0;
        update_prototypes(p, {Vec{2, 0, 0, 0}, Vec{4, 0, 0, 0}}, {ClothState::SC, ClothState::SC});
        CHECK(p.sc == Vec{3, 0, 0, 0});
        CHECK(p.cc == unit(4, 1)); // no CC samples: unchanged
    }
    SUBCASE("half momentum lands midway") {
        p.beta_sc = 0.5;
        update_prototypes(p, {Vec{0, 1, 0, 0}}, {ClothState::SC});
        CHECK(p.sc == Vec{0.5, 0.5, 0, 0});
    }
}

TEST_CASE("single-prototype mode pools both states into one mean") {
    StatePrototypes p;
    p.single = true;
    p.sc = Vec{0, 0};
    p.cc = Vec{0, 0};
    p.beta_sc = 1.0;
    update_prototypes(p, {Vec{2, 0}, Vec{0, 2}}, {ClothState::SC, ClothState::CC});
    CHECK(p.sc == Vec{1, 1});
    CHECK(p.prototype_for(ClothState::SC) == p.prototype_for(ClothState::CC));
}

TEST_CASE("prototype norms stay inside the convex bound") {
    Rng rng(71);
    for (int it = 0; it < 200; ++it) {
        StatePrototypes p;
        p.sc.assign(6, 0.0);
        p.cc.assign(6, 0.0);
        Rng r = rng.stream("case/" + std::to_string(it));
        for (double& v : p.sc) v = r.gaussian();
        for (double& v : p.cc) v = r.gaussian();
        p.beta_sc = r.uniform(0.0, 1.0);
        p.beta_cc = r.uniform(0.0, 1.0);
        double bound = std::max(l2_norm(p.sc), l2_norm(p.cc));
        double max_mean = 0.0;
        for (int step = 0; step < 20; ++step) {
            std::vector<Vec> embs;
            std::vector<ClothState> states;
            const int n = 1 + static_cast<int>(r.uniform_int(0, 6));
            for (int i = 0; i < n; ++i) {
                Vec e(6);
                for (double& v : e) v = r.gaussian(0.0, 2.0);
                embs.push_back(e);
                states.push_back(r.uniform() < 0.5 ? ClothState::SC : ClothState::CC);
            }
            // track the largest per-state batch-mean norm actually applied
            for (int s = 0; s < 2; ++s) {
                Vec m(6, 0.0);
                int c = 0;
                for (std::size_t i = 0; i < embs.size(); ++i)
                    if ((s == 0) == (states[i] == ClothState::SC)) {
                        axpy(m, embs[i], 1.0);
                        ++c;
                    }
                if (c > 0) {
                    for (double& v : m) v /= c;
                    max_mean = std::max(max_mean, l2_norm(m));
                }
            }
            update_prototypes(p, embs, states);
            const double lim = std::max(bound, max_mean) + 1e-9;
            CHECK(l2_norm(p.sc) <= lim);
            CHECK(l2_norm(p.cc) <= lim);
        }
    }
}

TEST_CASE("a stationary batch mean is approached geometrically") {
    StatePrototypes p;
    p.sc = Vec{4, -2, 1};
    p.cc = Vec{0, 0, 0};
    p.beta_sc = 0.25;
    const Vec m{1, 1, 1};
    Vec expected_gap(3);
    for (int i = 0; i < 3; ++i) expected_gap[static_cast<std::size_t>(i)] = p.sc[static_cast<std::size_t>(i)] - m[static_cast<std::size_t>(i)];
    for (int t = 1; t <= 30; ++t) {
        update_prototypes(p, {m}, {ClothState::SC});
        for (int i = 0; i < 3; ++i) {
            const double want = m[static_cast<std::size_t>(i)] + std::pow(0.75, t) * expected_gap[static_cast<std::size_t>(i)];
            CHECK(p.sc[static_cast<std::size_t>(i)] == doctest::Approx(want).epsilon(1e-12));
        }
    }
}

TEST_CASE("state classifier hand values and scaling invariance") {
    StateClassifier cls;
    cls.init(Rng(73).stream("cls"));
    cls.w.value.fill(0.0);
    cls.b.value.fill(0.0);
    Vec f(static_cast<std::size_t>(kFeatureDim), 0.7);
    Vec probs = classify_state(cls, f);
    CHECK(probs[0] == doctest::Approx(0.5));
    CHECK(probs[1] == doctest::Approx(0.5));

    cls.b.value.at(0, 0) = std::log(3.0);
    probs = classify_state(cls, f);
    CHECK(probs[0] == doctest::Approx(0.75));
    CHECK(probs[1] == doctest::Approx(0.25));

    // argmax invariant to positive feature scaling when the bias is zero
    cls.b.value.fill(0.0);
    Rng rng(79);
    for (int it = 0; it < 200; ++it) {
        StateClassifier c2;
        c2.init(Rng(rng.next_u64()).stream("c"));
        c2.w.init_gaussian(Rng(rng.next_u64()).stream("w"), 1.0);
        c2.b.value.fill(0.0);
        Vec x(static_cast<std::size_t>(kFeatureDim));
        for (double& v : x) v = rng.gaussian();
        const double scale = std::exp(rng.uniform(-2.0, 2.0));
        const Vec p1 = classify_state(c2, x);
        const Vec p2 = classify_state(c2, scaled(x, scale));
        CHECK(p1[0] + p1[1] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK((p1[0] >= p1[1]) == (p2[0] >= p2[1]));
    }
}

TEST_CASE("projection identities") {
    ProjectionBundle bundle;
    bundle.init(Rng(83).stream("proj"), 0.0); // exact identity heads
    Vec f(static_cast<std::size_t>(kFeatureDim));
    Rng rng(89);
    for (double& v : f) v = rng.gaussian();

    // identical heads: any valid mixture returns the feature
    const Vec half = project(f, {0.5, 0.5}, bundle);
    for (int k = 0; k < kFeatureDim; ++k) CHECK(half[static_cast<std::size_t>(k)] == doctest::Approx(f[static_cast<std::size_t>(k)]).epsilon(1e-12));

    // pure state: bit-identical to the lone-head matrix product
    ProjectionBundle mixed;
    mixed.init(Rng(97).stream("proj"), 0.05);
    const Vec pure = project(f, {1.0, 0.0}, mixed);
    Vec manual(static_cast<std::size_t>(kFeatureDim), 0.0);
    for (int j = 0; j < kFeatureDim; ++j) {
        double s_sc = 0.0, s_cc = 0.0;
        for (int i = 0; i < kFeatureDim; ++i) {
            s_sc += f[static_cast<std::size_t>(i)] * mixed.sc.value.at(i, j);
            s_cc += f[static_cast<std::size_t>(i)] * mixed.cc.value.at(i, j);
        }
        manual[static_cast<std::size_t>(j)] = 1.0 * s_sc + 0.0 * s_cc;
    }
    CHECK(pure == manual);

    // hand case: equal mixture of 2I and 4I on a basis vector
    ProjectionBundle scaled_heads;
    scaled_heads.init(Rng(1).stream("p"), 0.0);
    scale_inplace(scaled_heads.sc.value, 2.0);
    scale_inplace(scaled_heads.cc.value, 4.0);
    Vec e1(static_cast<std::size_t>(kFeatureDim), 0.0);
    e1[0] = 1.0;
    const Vec blended = project(e1, {0.5, 0.5}, scaled_heads);
    CHECK(blended[0] == doctest::Approx(3.0));
    for (int k = 1; k < kFeatureDim; ++k) CHECK(blended[static_cast<std::size_t>(k)] == doctest::Approx(0.0));

    CHECK_THROWS_AS(project(f, {0.7, 0.7}, bundle), ContractError);
}

TEST_CASE("projection loss hits its range endpoints") {
    StatePrototypes p;
    p.sc = Vec{1, 0};
    p.cc = Vec{0, 1};
    CHECK(projection_loss({Vec{2, 0}, Vec{0, 3}}, {ClothState::SC, ClothState::CC}, p) == doctest::Approx(0.0));
    CHECK(projection_loss({Vec{0, 5}}, {ClothState::SC}, p) == doctest::Approx(1.0));
    CHECK(projection_loss({Vec{-1, 0}}, {ClothState::SC}, p) == doctest::Approx(2.0));

    try {
        projection_loss({Vec{1, 0}, Vec{0, 0}}, {ClothState::SC, ClothState::SC}, p);
        FAIL("expected DegenerateVectorError");
    } catch (const DegenerateVectorError& e) {
        CHECK(std::string(e.what()).find("sample 1") != std::string::npos);
    }

    Rng rng(101);
    for (int it = 0; it < 200; ++it) {
        StatePrototypes pr;
        pr.sc.assign(8, 0.0);
        pr.cc.assign(8, 0.0);
        Rng r = rng.stream("case/" + std::to_string(it));
        for (double& v : pr.sc) v = r.gaussian();
        for (double& v : pr.cc) v = r.gaussian();
        std::vector<Vec> fp;
        std::vector<ClothState> st;
        const int n = 1 + static_cast<int>(r.uniform_int(0, 8));
        for (int i = 0; i < n; ++i) {
            Vec v(8);
            for (double& x : v) x = r.gaussian();
            fp.push_back(v);
            st.push_back(r.uniform() < 0.5 ? ClothState::SC : ClothState::CC);
        }
        const double l = projection_loss(fp, st, pr);
        CHECK(l >= 0.0);
        CHECK(l <= 2.0);
    }
}

namespace {

struct Fixture {
    World world = build_world(42);
    Model model;
    explicit Fixture(Variant variant = Variant::Full) {
        ModelSettings ms;
        ms.variant = variant;
        model.init(42, world.config.latent_dim(), ms);
        model.begin_task(world.seen[1]); // a cloth-changing domain
        // mix in a same-cloth domain so batches hold both states
        model.id_head.ensure_identities({world.seen[0].train_identities[0].id,
                                         world.seen[0].train_identities[1].id});
    }
    std::vector<SyntheticSample> mixed_state_batch() {
        Rng rng = Rng(42).stream("test/akfp-batch");
        auto batch = sample_pk_batch(world.seen[1], 3, 2, rng);
        batch.push_back(world.seen[0].train_samples[0]);
        batch.push_back(world.seen[0].train_samples[21]);
        return batch;
    }
};

} // namespace

TEST_CASE("combined loss decouples exactly at lambda zero") {
    Fixture fx;
    fx.model.settings.lambda = 0.0;
    const auto batch = fx.mixed_state_batch();
    const TotalLossReport r = total_loss(fx.model, batch);
    CHECK(r.l_total == r.l_id + r.l_triplet);
    CHECK(r.l_proj >= 0.0);
}

TEST_CASE("combined loss composes its components") {
    Fixture fx;
    const auto batch = fx.mixed_state_batch();
    const TotalLossReport r = total_loss(fx.model, batch);
    CHECK(r.l_total == doctest::Approx(r.l_id + r.l_triplet + fx.model.settings.lambda * r.l_proj));
}

TEST_CASE("full projection stage loss passes finite differences on an 8-sample batch") {
    Fixture fx;
    const auto batch = fx.mixed_state_batch();
    auto params = fx.model.projection_stage_parameters();
    auto loss = [&](bool with_grad) { return akfp_stage_loss(fx.model, batch, with_grad).objective; };
    auto report = finite_diff_check(loss, params, Rng(103).stream("gc"), {});
    INFO("worst ", report.worst_param, "[", report.worst_coord, "] rel ", report.max_rel_error);
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("projection stage loss leaves prompt parameters untouched") {
    Fixture fx;
    const auto batch = fx.mixed_state_batch();
    const Matrix base_snapshot = fx.model.prompts.base.value;
    const Matrix attn_snapshot = fx.model.ctx.attn.value;
    auto params = fx.model.projection_stage_parameters();
    OptimizerState opt;
    for (int step = 0; step < 5; ++step) {
        for (Parameter* p : params) p->zero_grad();
        akfp_stage_loss(fx.model, batch, true);
        adam_step(params, opt, 1e-3);
    }
    CHECK(fx.model.prompts.base.value.data == base_snapshot.data);
    CHECK(fx.model.ctx.attn.value.data == attn_snapshot.data);
}

TEST_CASE("sft variant reduces the stage loss to identity and triplet terms") {
    Fixture fx(Variant::Sft);
    const auto batch = fx.mixed_state_batch();
    const AkfpLossReport r = akfp_stage_loss(fx.model, batch, false);
    CHECK(r.l_proj == 0.0);
    CHECK(r.l_state == 0.0);
    CHECK(r.objective == r.l_id + r.l_triplet);
}
