#include "lreid/projection.hpp"

#include <cmath>

#include "lreid/errors.hpp"

namespace lreid {

namespace {

Vec mean_of(const std::vector<const Vec*>& group) {
    Vec m(group.front()->size(), 0.0);
    for (const Vec* v : group) axpy(m, *v, 1.0);
    for (double& x : m) x /= static_cast<double>(group.size());
    return m;
}

void ema_update(Vec& proto, const Vec& mean, double beta) {
    if (proto.size() != mean.size())
        throw ShapeError("update_prototypes: prototype and batch mean widths differ");
    for (std::size_t i = 0; i < proto.size(); ++i) proto[i] = (1.0 - beta) * proto[i] + beta * mean[i];
}

} // namespace

void update_prototypes(StatePrototypes& protos, const std::vector<Vec>& embeddings,
                       const std::vector<ClothState>& states) {
    if (embeddings.size() != states.size())
        throw ShapeError("update_prototypes: embedding and state counts differ");
    if (protos.single) {
        if (embeddings.empty()) return;
        std::vector<const Vec*> all;
        for (const Vec& e : embeddings) all.push_back(&e);
        ema_update(protos.sc, mean_of(all), protos.beta_sc);
        return;
    }
    std::vector<const Vec*> sc_group, cc_group;
    for (std::size_t i = 0; i < embeddings.size(); ++i)
        (states[i] == ClothState::SC ? sc_group : cc_group).push_back(&embeddings[i]);
    if (!sc_group.empty()) ema_update(protos.sc, mean_of(sc_group), protos.beta_sc);
    if (!cc_group.empty()) ema_update(protos.cc, mean_of(cc_group), protos.beta_cc);
}

void StateClassifier::init(Rng root) {
    w = Parameter("state.w", kFeatureDim, 2);
    w.init_gaussian(root.stream("state/w"), 0.01);
    b = Parameter("state.b", 1, 2, false);
}

Vec classify_state(const StateClassifier& classifier, const Vec& feature) {
    if (static_cast<int>(feature.size()) != classifier.w.value.rows)
        throw ShapeError("classify_state: feature width does not match classifier input");
    Vec logits(2, 0.0);
    for (int j = 0; j < 2; ++j) {
        double s = classifier.b.value.at(0, j);
        for (int i = 0; i < classifier.w.value.rows; ++i)
            s += feature[static_cast<std::size_t>(i)] * classifier.w.value.at(i, j);
        logits[static_cast<std::size_t>(j)] = s;
    }
    return softmax_vec(logits);
}

void ProjectionBundle::init(Rng root, double noise_sigma) {
    sc = Parameter("proj.sc", kFeatureDim, kFeatureDim);
    cc = Parameter("proj.cc", kFeatureDim, kFeatureDim);
    Rng sc_rng = root.stream("proj/sc");
    Rng cc_rng = root.stream("proj/cc");
    for (int i = 0; i < kFeatureDim; ++i)
        for (int j = 0; j < kFeatureDim; ++j) {
            sc.value.at(i, j) = (i == j ? 1.0 : 0.0) + sc_rng.gaussian(0.0, noise_sigma);
            cc.value.at(i, j) = (i == j ? 1.0 : 0.0) + cc_rng.gaussian(0.0, noise_sigma);
        }
}

Vec project(const Vec& feature, const Vec& state_probs, const ProjectionBundle& bundle) {
    if (state_probs.size() != 2)
        throw ContractError("project: state distribution must have exactly two entries");
    const double sum = state_probs[0] + state_probs[1];
    if (std::abs(sum - 1.0) > 1e-6)
        throw ContractError("project: state probabilities sum to " + std::to_string(sum) +
                            ", expected 1 within 1e-6");
    const int d = static_cast<int>(feature.size());
    if (d != bundle.sc.value.rows)
        throw ShapeError("project: feature width does not match projection heads");
    Vec out(static_cast<std::size_t>(d), 0.0);
    for (int j = 0; j < d; ++j) {
        double s_sc = 0.0, s_cc = 0.0;
        for (int i = 0; i < d; ++i) {
            s_sc += feature[static_cast<std::size_t>(i)] * bundle.sc.value.at(i, j);
            s_cc += feature[static_cast<std::size_t>(i)] * bundle.cc.value.at(i, j);
        }
        out[static_cast<std::size_t>(j)] = state_probs[0] * s_sc + state_probs[1] * s_cc;
    }
    return out;
}

double projection_loss(const std::vector<Vec>& projected, const std::vector<ClothState>& states,
                       const StatePrototypes& protos) {
    if (projected.empty())
        throw ProtocolError("projection_loss: empty batch");
    if (projected.size() != states.size())
        throw ShapeError("projection_loss: projected and state counts differ");
    double total = 0.0;
    for (std::size_t i = 0; i < projected.size(); ++i) {
        const Vec& target = protos.prototype_for(states[i]);
        try {
            total += 1.0 - cosine_similarity(projected[i], target);
        } catch (const DegenerateVectorError&) {
            throw DegenerateVectorError("projection_loss: degenerate vector at batch sample " +
                                        std::to_string(i));
        }
    }
    return total / static_cast<double>(projected.size());
}

} // namespace lreid
