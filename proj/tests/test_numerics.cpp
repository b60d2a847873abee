#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "lreid/errors.hpp"
#include "lreid/gradcheck.hpp"
#include "lreid/layers.hpp"
#include "lreid/matrix.hpp"
#include "lreid/optim.hpp"
#include "lreid/rng.hpp"
#include "oracles.hpp"

using namespace lreid;

namespace {

Matrix random_matrix(Rng& rng, int r, int c, double sigma = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.gaussian(0.0, sigma);
    return m;
}

} // namespace

TEST_CASE("linear matches hand-evaluated products") {
    Parameter w("w", 2, 2);
    w.value = Matrix::identity(2);
    Parameter b("b", 1, 2);
    Matrix x(1, 2);
    x.at(0, 0) = 1.0;
    x.at(0, 1) = 2.0;
    Matrix y = linear(x, w, &b);
    CHECK(y.at(0, 0) == doctest::Approx(1.0));
    CHECK(y.at(0, 1) == doctest::Approx(2.0));

    // zero input passes the bias through
    Matrix x0(1, 2, 0.0);
    Parameter b34("b34", 1, 2);
    b34.value.at(0, 0) = 3.0;
    b34.value.at(0, 1) = 4.0;
    Parameter wany("wany", 2, 2);
    wany.init_gaussian(Rng(7).stream("wany"), 1.0);
    Matrix y0 = linear(x0, wany, &b34);
    CHECK(y0.at(0, 0) == doctest::Approx(3.0));
    CHECK(y0.at(0, 1) == doctest::Approx(4.0));

    Parameter w2("w2", 2, 2);
    w2.value.at(0, 0) = 1.0;
    w2.value.at(0, 1) = 2.0;
    w2.value.at(1, 0) = 3.0;
    w2.value.at(1, 1) = 4.0;
    Matrix x1(1, 2, 1.0);
    Matrix y1 = linear(x1, w2, nullptr);
    CHECK(y1.at(0, 0) == doctest::Approx(4.0));
    CHECK(y1.at(0, 1) == doctest::Approx(6.0));
}

TEST_CASE("linear rejects nonconforming shapes and names both") {
    Parameter w("w", 3, 2);
    Matrix x(1, 2);
    try {
        linear(x, w, nullptr);
        FAIL("expected ShapeError");
    } catch (const ShapeError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("[1x2]") != std::string::npos);
        CHECK(msg.find("[3x2]") != std::string::npos);
    }
}

TEST_CASE("linear backward gradients are exact") {
    Rng rng(11);
    Parameter w("w", 4, 3);
    w.init_gaussian(rng.stream("w"), 0.7);
    Parameter b("b", 1, 3);
    b.init_gaussian(rng.stream("b"), 0.2);
    const Matrix x = random_matrix(rng, 5, 4);
    const std::vector<int> labels = {0, 2, 1, 1, 0};

    auto loss = [&](bool with_grad) {
        Matrix logits = linear(x, w, &b);
        if (!with_grad) return cross_entropy(logits, labels, nullptr);
        Matrix dlogits;
        const double l = cross_entropy(logits, labels, &dlogits);
        linear_backward(x, w, &b, dlogits);
        return l;
    };
    auto report = finite_diff_check(loss, {&w, &b}, Rng(3).stream("gc"), {});
    CHECK(report.max_rel_error < 1e-6);
}

TEST_CASE("softmax hand values") {
    Matrix z(1, 2, 0.0);
    Matrix p = softmax_rows(z);
    CHECK(p.at(0, 0) == doctest::Approx(0.5));
    CHECK(p.at(0, 1) == doctest::Approx(0.5));

    Matrix z3(1, 3, 1.7);
    Matrix p3 = softmax_rows(z3);
    for (int j = 0; j < 3; ++j) CHECK(p3.at(0, j) == doctest::Approx(1.0 / 3.0));

    Matrix zl(1, 2);
    zl.at(0, 0) = std::log(3.0);
    zl.at(0, 1) = 0.0;
    Matrix pl = softmax_rows(zl);
    CHECK(pl.at(0, 0) == doctest::Approx(0.75));
    CHECK(pl.at(0, 1) == doctest::Approx(0.25));
}

TEST_CASE("softmax rows sum to one and shift invariance holds") {
    Rng rng(21);
    for (int it = 0; it < 200; ++it) {
        const int k = 2 + static_cast<int>(rng.uniform_int(0, 7));
        Matrix z = random_matrix(rng, 3, k, 4.0);
        Matrix p = softmax_rows(z);
        for (int i = 0; i < p.rows; ++i) {
            double s = 0.0;
            for (int j = 0; j < k; ++j) {
                s += p.at(i, j);
                CHECK(p.at(i, j) > 0.0);
                CHECK(p.at(i, j) < 1.0);
            }
            CHECK(std::abs(s - 1.0) < 1e-9);
        }
        const double shift = rng.uniform(-50.0, 50.0);
        Matrix zs = z;
        for (double& v : zs.data) v += shift;
        Matrix ps = softmax_rows(zs);
        for (std::size_t i = 0; i < p.data.size(); ++i) CHECK(std::abs(p.data[i] - ps.data[i]) < 1e-9);
    }
}

TEST_CASE("softmax rejects non-finite logits") {
    Matrix z(1, 2, 0.0);
    z.at(0, 1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(softmax_rows(z), NumericError);
}

TEST_CASE("cosine similarity basics") {
    CHECK(cosine_similarity({1, 0}, {1, 0}) == doctest::Approx(1.0));
    CHECK(cosine_similarity({1, 0}, {0, 1}) == doctest::Approx(0.0));
    CHECK(cosine_similarity({1, 0}, {-1, 0}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(cosine_similarity({0, 0}, {1, 0}), DegenerateVectorError);

    Rng rng(5);
    for (int it = 0; it < 200; ++it) {
        Vec a(6);
        for (double& v : a) v = rng.gaussian();
        const double c = std::exp(rng.uniform(-3.0, 3.0));
        CHECK(std::abs(cosine_similarity(a, scaled(a, c)) - 1.0) < 1e-9);
    }
}

TEST_CASE("cross entropy hand values and errors") {
    Matrix uniform(2, 4, 0.3);
    CHECK(cross_entropy(uniform, {1, 3}) == doctest::Approx(std::log(4.0)));

    Matrix confident(1, 3, 0.0);
    confident.at(0, 2) = 50.0;
    CHECK(cross_entropy(confident, {2}) < 1e-6);

    Matrix zl(1, 2);
    zl.at(0, 0) = std::log(3.0);
    zl.at(0, 1) = 0.0;
    CHECK(cross_entropy(zl, {1}) == doctest::Approx(-std::log(0.25)));

    CHECK_THROWS_AS(cross_entropy(zl, {2}), LabelError);
    CHECK_THROWS_AS(cross_entropy(zl, {-1}), LabelError);
}

TEST_CASE("cross entropy gradient is (softmax - onehot)/b") {
    Rng rng(31);
    Matrix z = random_matrix(rng, 6, 5, 2.0);
    std::vector<int> labels;
    for (int i = 0; i < 6; ++i) labels.push_back(static_cast<int>(rng.uniform_int(0, 5)));
    Matrix dz;
    cross_entropy(z, labels, &dz);
    Matrix probs = softmax_rows(z);
    for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 5; ++j) {
            const double expected = (probs.at(i, j) - (labels[i] == j ? 1.0 : 0.0)) / 6.0;
            CHECK(dz.at(i, j) == doctest::Approx(expected).epsilon(1e-12));
        }
}

TEST_CASE("batch hard triplet trivial cases") {
    // Two tight, well-separated clusters: margin satisfied everywhere.
    Matrix f(4, 3);
    f.at(0, 0) = 10.0;
    f.at(1, 0) = 10.0;
    f.at(1, 1) = 0.01;
    f.at(2, 1) = 10.0;
    f.at(3, 1) = 10.0;
    f.at(3, 2) = 0.01;
    CHECK(batch_hard_triplet(f, {0, 0, 1, 1}, 0.3) == doctest::Approx(0.0));

    // All features identical: every distance is zero, loss equals the margin.
    Matrix same(4, 3, 1.0);
    CHECK(batch_hard_triplet(same, {0, 0, 1, 1}, 0.3) == doctest::Approx(0.3));

    CHECK_THROWS_AS(batch_hard_triplet(same, {2, 2, 2, 2}, 0.3), ProtocolError);
}

TEST_CASE("batch hard triplet matches the exhaustive oracle on a hand batch") {
    Matrix f(4, 2);
    f.at(0, 0) = 1.0;
    f.at(0, 1) = 0.2;
    f.at(1, 0) = 0.9;
    f.at(1, 1) = -0.1;
    f.at(2, 0) = -0.8;
    f.at(2, 1) = 0.5;
    f.at(3, 0) = -1.1;
    f.at(3, 1) = 0.4;
    const std::vector<int> ids = {7, 7, 9, 9};
    const double got = batch_hard_triplet(f, ids, 0.3);
    const double want = oracles::triplet_exhaustive(f, ids, 0.3);
    CHECK(got == want);
}

TEST_CASE("batch hard triplet equals the oracle exactly on random batches up to 8") {
    Rng rng(77);
    for (int it = 0; it < 200; ++it) {
        const int ids_count = 2 + static_cast<int>(rng.uniform_int(0, 3));
        std::vector<int> ids;
        for (int c = 0; c < ids_count; ++c) {
            const int reps = 1 + static_cast<int>(rng.uniform_int(0, 3));
            for (int r = 0; r < reps && static_cast<int>(ids.size()) < 8; ++r) ids.push_back(c * 11 + 3);
        }
        if (static_cast<int>(ids.size()) < 3) ids.push_back(3);
        bool has_pair = false;
        for (std::size_t i = 0; i + 1 < ids.size(); ++i)
            for (std::size_t j = i + 1; j < ids.size(); ++j)
                if (ids[i] == ids[j]) has_pair = true;
        if (!has_pair) ids.push_back(ids.front());
        Matrix f = random_matrix(rng, static_cast<int>(ids.size()), 5);
        const double margin = rng.uniform(0.05, 0.6);
        CHECK(batch_hard_triplet(f, ids, margin) == oracles::triplet_exhaustive(f, ids, margin));
    }
}

TEST_CASE("batch hard triplet subgradient passes finite differences") {
    Rng rng(99);
    Parameter feats("feats", 6, 4);
    feats.init_gaussian(rng.stream("f"), 1.0);
    const std::vector<int> ids = {0, 0, 1, 1, 2, 2};
    auto loss = [&](bool with_grad) {
        if (!with_grad) return batch_hard_triplet(feats.value, ids, 0.3, nullptr);
        Matrix df(feats.value.rows, feats.value.cols, 0.0);
        const double l = batch_hard_triplet(feats.value, ids, 0.3, &df);
        add_inplace(feats.grad, df);
        feats.grad_ready = true;
        return l;
    };
    auto report = finite_diff_check(loss, {&feats}, Rng(4).stream("gc"), {});
    CHECK(report.max_rel_error < 1e-4);
}

TEST_CASE("finite differences are near-exact on a quadratic") {
    Rng rng(13);
    Parameter x("x", 3, 4);
    x.init_gaussian(rng.stream("x"), 1.0);
    auto loss = [&](bool with_grad) {
        double l = 0.0;
        for (double v : x.value.data) l += 0.5 * v * v;
        if (with_grad) {
            add_inplace(x.grad, x.value);
            x.grad_ready = true;
        }
        return l;
    };
    auto report = finite_diff_check(loss, {&x}, Rng(8).stream("gc"), {});
    CHECK(report.max_rel_error < 1e-8);
}

TEST_CASE("finite differences reject nondeterministic closures") {
    Parameter x("x", 1, 1);
    int calls = 0;
    auto loss = [&](bool) { return static_cast<double>(++calls); };
    CHECK_THROWS_AS(finite_diff_check(loss, {&x}, Rng(1).stream("gc"), {}), DeterminismError);
}

TEST_CASE("adam with zero gradient only shrinks by weight decay") {
    Parameter p("p", 1, 2);
    p.value.at(0, 0) = 2.0;
    p.value.at(0, 1) = -4.0;
    p.grad_ready = true; // a backward pass ran and produced exact zeros
    OptimizerState st;
    st.weight_decay = 1e-2;
    adam_step({&p}, st, 0.1);
    CHECK(p.value.at(0, 0) == doctest::Approx(2.0 * (1.0 - 0.1 * 1e-2)));
    CHECK(p.value.at(0, 1) == doctest::Approx(-4.0 * (1.0 - 0.1 * 1e-2)));
}

TEST_CASE("adam update direction opposes a constant gradient") {
    Parameter p("p", 1, 1);
    OptimizerState st;
    st.weight_decay = 0.0;
    double prev = p.value.at(0, 0);
    for (int step = 0; step < 25; ++step) {
        p.grad.at(0, 0) = 3.5;
        p.grad_ready = true;
        adam_step({&p}, st, 0.05);
        CHECK(p.value.at(0, 0) < prev);
        prev = p.value.at(0, 0);
    }
}

TEST_CASE("adam first step from scratch moves by about minus lr") {
    Parameter p("p", 1, 1); // starts at zero so decay has no effect
    p.grad.at(0, 0) = 1.0;
    p.grad_ready = true;
    OptimizerState st;
    adam_step({&p}, st, 0.1);
    CHECK(p.value.at(0, 0) == doctest::Approx(-0.1).epsilon(1e-6));
    // gradients zeroed afterwards
    CHECK(p.grad.at(0, 0) == 0.0);
    CHECK_FALSE(p.grad_ready);
}

TEST_CASE("adam refuses to step before any backward pass") {
    Parameter p("p", 2, 2);
    OptimizerState st;
    CHECK_THROWS_AS(adam_step({&p}, st, 0.1), EmptyGradientError);
}

TEST_CASE("schedule endpoints and midpoint") {
    Schedule cos{ScheduleKind::CosineDecay, 11, 0, 1.0, 0.1};
    CHECK(schedule_rate(cos, 0) == doctest::Approx(1.0));
    CHECK(schedule_rate(cos, 10) == doctest::Approx(0.1));
    Schedule cos0{ScheduleKind::CosineDecay, 11, 0, 2.0, 0.0};
    CHECK(schedule_rate(cos0, 5) == doctest::Approx(1.0)); // midpoint at half base
    CHECK_THROWS_AS(schedule_rate(cos, 11), RangeError);
    CHECK_THROWS_AS(schedule_rate(cos, -1), RangeError);
}

TEST_CASE("warmup ramps then decays") {
    Schedule w{ScheduleKind::WarmupThenDecay, 10, 3, 1.0, 0.05};
    CHECK(schedule_rate(w, 0) < schedule_rate(w, 2));
    CHECK(schedule_rate(w, 0) == doctest::Approx(0.25));
    CHECK(schedule_rate(w, 3) == doctest::Approx(1.0));
    CHECK(schedule_rate(w, 9) == doctest::Approx(0.05));
    // the rate at epoch 0 sits strictly below the end of warmup, even for a
    // one-epoch ramp
    Schedule tiny{ScheduleKind::WarmupThenDecay, 6, 1, 1.0, 0.0};
    CHECK(schedule_rate(tiny, 0) < schedule_rate(tiny, 1));
}

TEST_CASE("every schedule kind is nonincreasing after warmup") {
    Rng rng(41);
    for (int it = 0; it < 200; ++it) {
        const int total = 2 + static_cast<int>(rng.uniform_int(0, 30));
        Schedule s;
        const int kind = static_cast<int>(rng.uniform_int(0, 3));
        s.kind = kind == 0 ? ScheduleKind::CosineDecay
                           : (kind == 1 ? ScheduleKind::WarmupThenDecay : ScheduleKind::Constant);
        s.total_epochs = total;
        s.warmup_epochs = s.kind == ScheduleKind::WarmupThenDecay
                              ? static_cast<int>(rng.uniform_int(1, total))
                              : 0;
        s.base_lr = rng.uniform(1e-4, 1.0);
        s.floor_lr = s.base_lr * rng.uniform(0.0, 0.5);
        double prev = std::numeric_limits<double>::infinity();
        for (int e = s.warmup_epochs; e < total; ++e) {
            const double r = schedule_rate(s, e);
            CHECK(r > 0.0);
            CHECK(r <= s.base_lr + 1e-15);
            CHECK(r <= prev + 1e-15);
            prev = r;
        }
    }
}
