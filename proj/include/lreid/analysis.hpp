#pragma once

#include <string>

#include "lreid/model.hpp"
#include "lreid/world.hpp"

namespace lreid {

// Post-training diagnostics of the state classifier, the projected feature
// space, and the prompt embeddings, computed on held-out (eval) samples plus
// synthetic mixed interpolations.
struct AnalysisReport {
    // state-prediction accuracy of the classifier on eval samples
    double state_acc_sc = 0.0;
    double state_acc_cc = 0.0;
    double state_acc_avg = 0.0;

    // mean predicted p(SC) by input source category (pairs sum to 1 with p(CC))
    double mean_p_sc_on_sc = 0.0;
    double mean_p_sc_on_cc = 0.0;
    double mean_p_sc_on_mixed = 0.0;

    // cosine distances in the projected feature space, per state
    double intra_dist_sc = 0.0;
    double inter_dist_sc = 0.0;
    double intra_dist_cc = 0.0;
    double inter_dist_cc = 0.0;

    // mean cosine similarity of prompt embeddings against the fixed concept
    // embeddings, by source category
    double concept_sc_sim_on_sc = 0.0;
    double concept_cc_sim_on_sc = 0.0;
    double concept_sc_sim_on_cc = 0.0;
    double concept_cc_sim_on_cc = 0.0;
    double concept_sc_sim_on_mixed = 0.0;
    double concept_cc_sim_on_mixed = 0.0;
};

AnalysisReport mechanism_analyses(const Model& model, const World& world);

// Long-format CSV: metric,category,value (plot-ready).
std::string analysis_long_csv(const AnalysisReport& report);
// Human-readable one-page summary. Mixed-sample rows are synthetic
// interpolations, flagged as such.
std::string analysis_summary(const AnalysisReport& report);

} // namespace lreid
