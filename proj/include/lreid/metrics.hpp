#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lreid/matrix.hpp"
#include "lreid/world.hpp"

namespace lreid {

// One query's ranking over the (unmasked) gallery: gallery ids ordered by
// descending similarity, ties broken by ascending gallery id.
struct RankingResult {
    int query_index = 0;
    std::vector<int> gallery_order;
    std::vector<char> relevant; // aligned with gallery_order
};

// Mean over relevant items of precision at their rank.
// Throws ProtocolError when the ranking contains no relevant item.
double average_precision(const RankingResult& ranking);

struct DomainMetrics {
    double map_pct = 0.0;
    double rank1_pct = 0.0;
};

using FeatureFn = std::function<Vec(const SyntheticSample&)>;

// Retrieval by cosine similarity of encoded features. Under the
// cloth-changing protocol, same-identity same-outfit gallery entries are
// masked out of each query's candidate list before ranking.
DomainMetrics map_and_rank1(const EvalSplit& split, const FeatureFn& encoder);

// Exposed for protocol tests: the ranking for one query against the gallery.
RankingResult rank_query(const EvalSplit& split, int query_index, const std::vector<Vec>& query_features,
                         const std::vector<Vec>& gallery_features);

struct MatrixCell {
    bool filled = false;
    DomainMetrics metrics;
};

// Per-task-after-each-task results; row t holds the domains of tasks 0..t.
struct SeenDomainMatrix {
    std::vector<std::string> domain_names; // in task order
    std::vector<ClothState> domain_states;
    std::vector<std::vector<MatrixCell>> cells;

    struct Averages {
        double sc_map = 0.0, sc_r1 = 0.0;
        double cc_map = 0.0, cc_r1 = 0.0;
        double total_map = 0.0, total_r1 = 0.0;
    };
    // Recomputed from the final row's cells.
    Averages final_averages() const;
    std::string to_csv() const; // after_task,eval_domain,mAP,rank1
};

struct ForgettingReport {
    std::vector<std::string> domains;
    std::vector<double> drops; // best historical mAP minus final mAP, per domain
    double mean_drop = 0.0;
};

ForgettingReport forgetting_report(const SeenDomainMatrix& matrix);

} // namespace lreid
