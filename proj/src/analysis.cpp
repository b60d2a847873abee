#include "lreid/analysis.hpp"

#include <map>
#include <sstream>

#include "lreid/errors.hpp"
#include "lreid/layers.hpp"
#include "lreid/textio.hpp"

namespace lreid {

namespace {

struct PairDistances {
    double intra = 0.0;
    double inter = 0.0;
};

// Mean cosine distance over same-identity and different-identity pairs.
// Identities with a single sample cannot form an intra pair and simply do
// not contribute to the intra mean.
PairDistances pair_distances(const std::vector<Vec>& features, const std::vector<int>& identities) {
    double intra_sum = 0.0, inter_sum = 0.0;
    long intra_n = 0, inter_n = 0;
    for (std::size_t i = 0; i + 1 < features.size(); ++i)
        for (std::size_t j = i + 1; j < features.size(); ++j) {
            const double d = 1.0 - cosine_similarity(features[i], features[j]);
            if (identities[i] == identities[j]) {
                intra_sum += d;
                ++intra_n;
            } else {
                inter_sum += d;
                ++inter_n;
            }
        }
    PairDistances out;
    out.intra = intra_n ? intra_sum / intra_n : 0.0;
    out.inter = inter_n ? inter_sum / inter_n : 0.0;
    return out;
}

} // namespace

AnalysisReport mechanism_analyses(const Model& model, const World& world) {
    AnalysisReport report;

    const Vec concept_sc = model.concept_embedding(ClothState::SC);
    const Vec concept_cc = model.concept_embedding(ClothState::CC);

    struct CategoryStats {
        double p_sc_sum = 0.0;
        double sim_sc_sum = 0.0;
        double sim_cc_sum = 0.0;
        int n = 0;
        int correct = 0;
    };
    CategoryStats on_sc, on_cc, on_mixed;

    std::vector<Vec> proj_sc, proj_cc;
    std::vector<int> ids_sc, ids_cc;

    for (const Domain& d : world.seen) {
        CategoryStats& stats = d.state_kind == ClothState::SC ? on_sc : on_cc;
        auto& proj_bucket = d.state_kind == ClothState::SC ? proj_sc : proj_cc;
        auto& id_bucket = d.state_kind == ClothState::SC ? ids_sc : ids_cc;
        for (const SyntheticSample& s : d.eval_samples) {
            const Vec f = model.encode_visual(s);
            const Vec probs = classify_state(model.state_cls, f);
            stats.p_sc_sum += probs[0];
            stats.n += 1;
            const int pred = probs[0] >= probs[1] ? 0 : 1;
            const int truth = s.state == ClothState::SC ? 0 : 1;
            stats.correct += pred == truth ? 1 : 0;

            proj_bucket.push_back(project(f, probs, model.proj));
            id_bucket.push_back(s.identity);

            const Vec e = model.casp_embedding(s);
            stats.sim_sc_sum += cosine_similarity(e, concept_sc);
            stats.sim_cc_sum += cosine_similarity(e, concept_cc);
        }
    }

    for (const Vec& latent : mixed_analysis_latents(world, 150)) {
        const Vec f = model.visual.forward_one(latent);
        const Vec probs = classify_state(model.state_cls, f);
        on_mixed.p_sc_sum += probs[0];
        on_mixed.n += 1;
        SyntheticSample fake;
        fake.latent = latent;
        const Vec e = model.casp_embedding(fake);
        on_mixed.sim_sc_sum += cosine_similarity(e, concept_sc);
        on_mixed.sim_cc_sum += cosine_similarity(e, concept_cc);
    }

    if (on_sc.n == 0 || on_cc.n == 0)
        throw ProtocolError("mechanism_analyses: world lacks SC or CC eval samples");

    report.state_acc_sc = static_cast<double>(on_sc.correct) / on_sc.n;
    report.state_acc_cc = static_cast<double>(on_cc.correct) / on_cc.n;
    report.state_acc_avg = 0.5 * (report.state_acc_sc + report.state_acc_cc);
    report.mean_p_sc_on_sc = on_sc.p_sc_sum / on_sc.n;
    report.mean_p_sc_on_cc = on_cc.p_sc_sum / on_cc.n;
    report.mean_p_sc_on_mixed = on_mixed.n ? on_mixed.p_sc_sum / on_mixed.n : 0.5;

    const PairDistances sc_pairs = pair_distances(proj_sc, ids_sc);
    const PairDistances cc_pairs = pair_distances(proj_cc, ids_cc);
    report.intra_dist_sc = sc_pairs.intra;
    report.inter_dist_sc = sc_pairs.inter;
    report.intra_dist_cc = cc_pairs.intra;
    report.inter_dist_cc = cc_pairs.inter;

    report.concept_sc_sim_on_sc = on_sc.sim_sc_sum / on_sc.n;
    report.concept_cc_sim_on_sc = on_sc.sim_cc_sum / on_sc.n;
    report.concept_sc_sim_on_cc = on_cc.sim_sc_sum / on_cc.n;
    report.concept_cc_sim_on_cc = on_cc.sim_cc_sum / on_cc.n;
    report.concept_sc_sim_on_mixed = on_mixed.n ? on_mixed.sim_sc_sum / on_mixed.n : 0.0;
    report.concept_cc_sim_on_mixed = on_mixed.n ? on_mixed.sim_cc_sum / on_mixed.n : 0.0;

    return report;
}

std::string analysis_long_csv(const AnalysisReport& r) {
    std::ostringstream os;
    os << "metric,category,value\n";
    auto row = [&](const char* metric, const char* category, double value) {
        os << metric << "," << category << "," << format_metric(value) << "\n";
    };
    row("state_accuracy", "SC", r.state_acc_sc);
    row("state_accuracy", "CC", r.state_acc_cc);
    row("state_accuracy", "average", r.state_acc_avg);
    row("mean_p_sc", "SC_source", r.mean_p_sc_on_sc);
    row("mean_p_sc", "CC_source", r.mean_p_sc_on_cc);
    row("mean_p_sc", "mixed_source", r.mean_p_sc_on_mixed);
    row("mean_p_cc", "SC_source", 1.0 - r.mean_p_sc_on_sc);
    row("mean_p_cc", "CC_source", 1.0 - r.mean_p_sc_on_cc);
    row("mean_p_cc", "mixed_source", 1.0 - r.mean_p_sc_on_mixed);
    row("intra_class_distance", "SC", r.intra_dist_sc);
    row("inter_class_distance", "SC", r.inter_dist_sc);
    row("intra_class_distance", "CC", r.intra_dist_cc);
    row("inter_class_distance", "CC", r.inter_dist_cc);
    row("concept_similarity_sc", "SC_source", r.concept_sc_sim_on_sc);
    row("concept_similarity_cc", "SC_source", r.concept_cc_sim_on_sc);
    row("concept_similarity_sc", "CC_source", r.concept_sc_sim_on_cc);
    row("concept_similarity_cc", "CC_source", r.concept_cc_sim_on_cc);
    row("concept_similarity_sc", "mixed_source", r.concept_sc_sim_on_mixed);
    row("concept_similarity_cc", "mixed_source", r.concept_cc_sim_on_mixed);
    return os.str();
}

std::string analysis_summary(const AnalysisReport& r) {
    std::ostringstream os;
    os << "State classifier accuracy on held-out samples\n";
    os << "  SC: " << format_metric(100.0 * r.state_acc_sc) << "%  CC: "
       << format_metric(100.0 * r.state_acc_cc) << "%  average: "
       << format_metric(100.0 * r.state_acc_avg) << "%\n\n";
    os << "Mean predicted p(SC) by input source\n";
    os << "  SC source:    " << format_metric(r.mean_p_sc_on_sc) << "\n";
    os << "  CC source:    " << format_metric(r.mean_p_sc_on_cc) << "\n";
    os << "  mixed source: " << format_metric(r.mean_p_sc_on_mixed)
       << "  (synthetic 50/50 interpolations, no ground-truth state)\n\n";
    os << "Projected feature space (cosine distance)\n";
    os << "  SC identities: intra " << format_metric(r.intra_dist_sc) << "  inter "
       << format_metric(r.inter_dist_sc) << "\n";
    os << "  CC identities: intra " << format_metric(r.intra_dist_cc) << "  inter "
       << format_metric(r.inter_dist_cc) << "\n\n";
    os << "Prompt embedding similarity to the fixed state concepts\n";
    os << "  SC source:    sc-concept " << format_metric(r.concept_sc_sim_on_sc) << "  cc-concept "
       << format_metric(r.concept_cc_sim_on_sc) << "\n";
    os << "  CC source:    sc-concept " << format_metric(r.concept_sc_sim_on_cc) << "  cc-concept "
       << format_metric(r.concept_cc_sim_on_cc) << "\n";
    os << "  mixed source: sc-concept " << format_metric(r.concept_sc_sim_on_mixed) << "  cc-concept "
       << format_metric(r.concept_cc_sim_on_mixed) << "\n";
    return os.str();
}

} // namespace lreid
