#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "lreid/errors.hpp"
#include "lreid/layers.hpp"
#include "lreid/metrics.hpp"
#include "lreid/rng.hpp"
#include "lreid/world.hpp"
#include "oracles.hpp"

using namespace lreid;

namespace {

// Features are stashed in the latent field; the encoder just returns them.
const FeatureFn kLatentEncoder = [](const SyntheticSample& s) { return s.latent; };

SyntheticSample make_sample(int identity, int outfit, Vec feature, ClothState state = ClothState::SC) {
    SyntheticSample s;
    s.identity = identity;
    s.outfit = outfit;
    s.latent = std::move(feature);
    s.state = state;
    return s;
}

EvalSplit random_instance(Rng& rng, bool cc_protocol) {
    EvalSplit split;
    split.cloth_changing_protocol = cc_protocol;
    const int dim = 6;
    const int ids = 2 + static_cast<int>(rng.uniform_int(0, 4));
    const int gallery_n = 5 + static_cast<int>(rng.uniform_int(0, 11)); // <= 15 before repairs
    const int queries_n = 1 + static_cast<int>(rng.uniform_int(0, 5));  // <= 5 repairs keep gallery <= 20
    auto feature = [&]() {
        Vec f(dim);
        for (double& v : f) v = rng.gaussian();
        return f;
    };
    for (int g = 0; g < gallery_n; ++g)
        split.gallery.push_back(make_sample(static_cast<int>(rng.uniform_int(0, ids)),
                                            static_cast<int>(rng.uniform_int(0, 3)), feature()));
    for (int q = 0; q < queries_n; ++q)
        split.queries.push_back(make_sample(static_cast<int>(rng.uniform_int(0, ids)),
                                            static_cast<int>(rng.uniform_int(0, 3)), feature()));
    // every query needs at least one unmasked relevant item; append repairs
    for (auto& q : split.queries) {
        bool ok = false;
        for (const auto& g : split.gallery) {
            if (g.identity != q.identity) continue;
            if (cc_protocol && g.outfit == q.outfit) continue;
            ok = true;
        }
        if (!ok) split.gallery.push_back(make_sample(q.identity, q.outfit + 1, feature()));
    }
    REQUIRE(split.gallery.size() <= 20);
    return split;
}

// Independent mAP / Rank-1 via the brute-force oracles.
std::pair<double, double> oracle_metrics(const EvalSplit& split) {
    double ap_sum = 0.0;
    int rank1 = 0;
    for (const auto& q : split.queries) {
        oracles::RankedQuery rq;
        for (const auto& g : split.gallery) {
            rq.similarities.push_back(cosine_similarity(q.latent, g.latent));
            rq.relevant.push_back(g.identity == q.identity ? 1 : 0);
            rq.masked.push_back(split.cloth_changing_protocol && g.identity == q.identity &&
                                        g.outfit == q.outfit
                                    ? 1
                                    : 0);
        }
        const double ap = oracles::ap_bruteforce(rq);
        REQUIRE(ap >= 0.0);
        ap_sum += ap;
        rank1 += oracles::rank1_bruteforce(rq) ? 1 : 0;
    }
    return {100.0 * ap_sum / static_cast<double>(split.queries.size()),
            100.0 * static_cast<double>(rank1) / static_cast<double>(split.queries.size())};
}

} // namespace

TEST_CASE("average precision hand values") {
    RankingResult r;
    r.gallery_order = {0, 1, 2};
    r.relevant = {1, 0, 0};
    CHECK(average_precision(r) == doctest::Approx(1.0));
    r.relevant = {0, 1, 0};
    CHECK(average_precision(r) == doctest::Approx(0.5));
    r.relevant = {1, 0, 1};
    CHECK(average_precision(r) == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0));
    r.relevant = {0, 0, 0};
    CHECK_THROWS_AS(average_precision(r), ProtocolError);
}

TEST_CASE("an identity-revealing encoder scores perfectly on a same-cloth domain") {
    const World w = build_world(4242);
    const Domain* sc = nullptr;
    for (const auto& d : w.seen)
        if (d.state_kind == ClothState::SC) sc = &d;
    REQUIRE(sc != nullptr);
    // perfect oracle: identity core as the feature
    std::map<int, Vec> cores;
    for (const auto& i : sc->eval_identities) cores[i.id] = i.core;
    const FeatureFn perfect = [&](const SyntheticSample& s) { return cores.at(s.identity); };
    const DomainMetrics m = map_and_rank1(eval_split(*sc), perfect);
    CHECK(m.map_pct == doctest::Approx(100.0));
    CHECK(m.rank1_pct == doctest::Approx(100.0));
}

TEST_CASE("a constant encoder ranks by gallery id and matches the oracle") {
    Rng rng(5150);
    EvalSplit split = random_instance(rng, false);
    for (auto& s : split.queries) s.latent.assign(6, 0.7);
    for (auto& s : split.gallery) s.latent.assign(6, 0.7);
    std::vector<Vec> qf, gf;
    for (const auto& s : split.queries) qf.push_back(s.latent);
    for (const auto& s : split.gallery) gf.push_back(s.latent);
    const RankingResult ranking = rank_query(split, 0, qf, gf);
    for (std::size_t i = 0; i < ranking.gallery_order.size(); ++i)
        CHECK(ranking.gallery_order[i] == static_cast<int>(i)); // tie-break: ascending id

    const auto [omap, or1] = oracle_metrics(split);
    const DomainMetrics m = map_and_rank1(split, kLatentEncoder);
    CHECK(m.map_pct == omap);
    CHECK(m.rank1_pct == or1);
}

TEST_CASE("retrieval metrics equal the brute-force oracle exactly on 100 random instances") {
    Rng rng(90210);
    for (int it = 0; it < 100; ++it) {
        Rng r = rng.stream("instance/" + std::to_string(it));
        EvalSplit split = random_instance(r, it % 2 == 1); // alternate CC-protocol masking
        const DomainMetrics m = map_and_rank1(split, kLatentEncoder);
        const auto [omap, or1] = oracle_metrics(split);
        CHECK(m.map_pct == omap); // exact, not approximate
        CHECK(m.rank1_pct == or1);
    }
}

TEST_CASE("cloth-changing masking removes exactly same-identity same-outfit entries") {
    Rng rng(777);
    for (int it = 0; it < 200; ++it) {
        Rng r = rng.stream("mask/" + std::to_string(it));
        EvalSplit split = random_instance(r, true);
        std::vector<Vec> qf, gf;
        for (const auto& s : split.queries) qf.push_back(s.latent);
        for (const auto& s : split.gallery) gf.push_back(s.latent);
        for (std::size_t qi = 0; qi < split.queries.size(); ++qi) {
            const RankingResult ranking = rank_query(split, static_cast<int>(qi), qf, gf);
            std::set<int> present(ranking.gallery_order.begin(), ranking.gallery_order.end());
            for (std::size_t g = 0; g < split.gallery.size(); ++g) {
                const bool should_mask = split.gallery[g].identity == split.queries[qi].identity &&
                                         split.gallery[g].outfit == split.queries[qi].outfit;
                CHECK(present.count(static_cast<int>(g)) == (should_mask ? 0u : 1u));
            }
        }
    }
}

TEST_CASE("rank-1 is 100 exactly when every query's top hit is relevant") {
    Rng rng(31337);
    for (int it = 0; it < 200; ++it) {
        Rng r = rng.stream("r1/" + std::to_string(it));
        EvalSplit split = random_instance(r, false);
        std::vector<Vec> qf, gf;
        for (const auto& s : split.queries) qf.push_back(s.latent);
        for (const auto& s : split.gallery) gf.push_back(s.latent);
        bool all_top1 = true;
        for (std::size_t qi = 0; qi < split.queries.size(); ++qi) {
            const RankingResult ranking = rank_query(split, static_cast<int>(qi), qf, gf);
            if (ranking.relevant.empty() || !ranking.relevant.front()) all_top1 = false;
        }
        const DomainMetrics m = map_and_rank1(split, kLatentEncoder);
        CHECK((m.rank1_pct == 100.0) == all_top1);
    }
}

TEST_CASE("matrix averages recompute from the final row") {
    SeenDomainMatrix matrix;
    matrix.domain_names = {"SC1", "CC1"};
    matrix.domain_states = {ClothState::SC, ClothState::CC};
    matrix.cells.resize(2);
    matrix.cells[0] = {MatrixCell{true, {60.0, 70.0}}, MatrixCell{}};
    matrix.cells[1] = {MatrixCell{true, {50.0, 65.0}}, MatrixCell{true, {70.0, 80.0}}};
    const auto avg = matrix.final_averages();
    CHECK(avg.sc_map == doctest::Approx(50.0));
    CHECK(avg.cc_map == doctest::Approx(70.0));
    CHECK(avg.total_map == doctest::Approx(60.0));
    CHECK(avg.total_r1 == doctest::Approx(72.5));

    const std::string csv = matrix.to_csv();
    CHECK(csv.find("after_task,eval_domain,mAP,rank1") == 0);
    CHECK(csv.find("2,CC1,70.0000,80.0000") != std::string::npos);
}

TEST_CASE("forgetting drops are best-minus-final, nonnegative") {
    SeenDomainMatrix single;
    single.domain_names = {"SC1"};
    single.domain_states = {ClothState::SC};
    single.cells = {{MatrixCell{true, {55.0, 60.0}}}};
    const auto fr1 = forgetting_report(single);
    REQUIRE(fr1.drops.size() == 1);
    CHECK(fr1.drops[0] == doctest::Approx(0.0));

    SeenDomainMatrix m;
    m.domain_names = {"A", "B"};
    m.domain_states = {ClothState::SC, ClothState::CC};
    m.cells.resize(2);
    m.cells[0] = {MatrixCell{true, {60.0, 0.0}}, MatrixCell{}};
    m.cells[1] = {MatrixCell{true, {50.0, 0.0}}, MatrixCell{true, {70.0, 0.0}}};
    const auto fr = forgetting_report(m);
    REQUIRE(fr.drops.size() == 2);
    CHECK(fr.drops[0] == doctest::Approx(10.0)); // 60 -> 50
    CHECK(fr.drops[1] == doctest::Approx(0.0));  // monotone-improving
    CHECK(fr.mean_drop == doctest::Approx(5.0));
}
