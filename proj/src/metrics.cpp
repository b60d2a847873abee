#include "lreid/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lreid/errors.hpp"
#include "lreid/layers.hpp"
#include "lreid/textio.hpp"

namespace lreid {

double average_precision(const RankingResult& ranking) {
    int relevant_total = 0;
    for (char r : ranking.relevant) relevant_total += r ? 1 : 0;
    if (relevant_total == 0)
        throw ProtocolError("average_precision: query " + std::to_string(ranking.query_index) +
                            " has no relevant gallery item; it must be excluded upstream");
    double ap = 0.0;
    int hits = 0;
    for (std::size_t r = 0; r < ranking.gallery_order.size(); ++r) {
        if (ranking.relevant[r]) {
            ++hits;
            ap += static_cast<double>(hits) / static_cast<double>(r + 1);
        }
    }
    return ap / relevant_total;
}

RankingResult rank_query(const EvalSplit& split, int query_index, const std::vector<Vec>& query_features,
                         const std::vector<Vec>& gallery_features) {
    const SyntheticSample& q = split.queries[static_cast<std::size_t>(query_index)];
    const Vec& qf = query_features[static_cast<std::size_t>(query_index)];

    std::vector<int> candidates;
    std::vector<double> sims;
    for (std::size_t g = 0; g < split.gallery.size(); ++g) {
        const SyntheticSample& item = split.gallery[g];
        if (split.cloth_changing_protocol && item.identity == q.identity && item.outfit == q.outfit)
            continue; // masked: same identity wearing the same outfit
        candidates.push_back(static_cast<int>(g));
        sims.push_back(cosine_similarity(qf, gallery_features[g]));
    }
    std::vector<int> order(candidates.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (sims[static_cast<std::size_t>(a)] != sims[static_cast<std::size_t>(b)])
            return sims[static_cast<std::size_t>(a)] > sims[static_cast<std::size_t>(b)];
        return candidates[static_cast<std::size_t>(a)] < candidates[static_cast<std::size_t>(b)];
    });

    RankingResult result;
    result.query_index = query_index;
    for (int idx : order) {
        const int g = candidates[static_cast<std::size_t>(idx)];
        result.gallery_order.push_back(g);
        result.relevant.push_back(split.gallery[static_cast<std::size_t>(g)].identity == q.identity ? 1 : 0);
    }
    return result;
}

DomainMetrics map_and_rank1(const EvalSplit& split, const FeatureFn& encoder) {
    if (split.queries.empty())
        throw ProtocolError("map_and_rank1: empty query set");
    std::vector<Vec> query_features, gallery_features;
    query_features.reserve(split.queries.size());
    gallery_features.reserve(split.gallery.size());
    for (const auto& s : split.queries) query_features.push_back(encoder(s));
    for (const auto& s : split.gallery) gallery_features.push_back(encoder(s));

    double ap_sum = 0.0;
    int rank1 = 0;
    for (std::size_t qi = 0; qi < split.queries.size(); ++qi) {
        const RankingResult ranking = rank_query(split, static_cast<int>(qi), query_features, gallery_features);
        ap_sum += average_precision(ranking);
        if (!ranking.relevant.empty() && ranking.relevant.front()) ++rank1;
    }
    DomainMetrics m;
    m.map_pct = 100.0 * ap_sum / static_cast<double>(split.queries.size());
    m.rank1_pct = 100.0 * static_cast<double>(rank1) / static_cast<double>(split.queries.size());
    return m;
}

SeenDomainMatrix::Averages SeenDomainMatrix::final_averages() const {
    Averages avg;
    if (cells.empty()) return avg;
    const auto& last = cells.back();
    int sc_n = 0, cc_n = 0;
    for (std::size_t d = 0; d < last.size(); ++d) {
        if (!last[d].filled) continue;
        if (domain_states[d] == ClothState::SC) {
            avg.sc_map += last[d].metrics.map_pct;
            avg.sc_r1 += last[d].metrics.rank1_pct;
            ++sc_n;
        } else {
            avg.cc_map += last[d].metrics.map_pct;
            avg.cc_r1 += last[d].metrics.rank1_pct;
            ++cc_n;
        }
    }
    const int n = sc_n + cc_n;
    avg.total_map = n ? (avg.sc_map + avg.cc_map) / n : 0.0;
    avg.total_r1 = n ? (avg.sc_r1 + avg.cc_r1) / n : 0.0;
    if (sc_n) {
        avg.sc_map /= sc_n;
        avg.sc_r1 /= sc_n;
    }
    if (cc_n) {
        avg.cc_map /= cc_n;
        avg.cc_r1 /= cc_n;
    }
    return avg;
}

std::string SeenDomainMatrix::to_csv() const {
    std::ostringstream os;
    os << "after_task,eval_domain,mAP,rank1\n";
    for (std::size_t t = 0; t < cells.size(); ++t)
        for (std::size_t d = 0; d < cells[t].size(); ++d) {
            if (!cells[t][d].filled) continue;
            os << (t + 1) << "," << domain_names[d] << "," << format_metric(cells[t][d].metrics.map_pct)
               << "," << format_metric(cells[t][d].metrics.rank1_pct) << "\n";
        }
    return os.str();
}

ForgettingReport forgetting_report(const SeenDomainMatrix& matrix) {
    ForgettingReport report;
    if (matrix.cells.empty()) return report;
    const auto& final_row = matrix.cells.back();
    for (std::size_t d = 0; d < matrix.domain_names.size(); ++d) {
        double best = -1.0;
        for (const auto& row : matrix.cells)
            if (d < row.size() && row[d].filled) best = std::max(best, row[d].metrics.map_pct);
        if (best < 0.0 || !final_row[d].filled) continue;
        report.domains.push_back(matrix.domain_names[d]);
        report.drops.push_back(best - final_row[d].metrics.map_pct);
    }
    double sum = 0.0;
    for (double drop : report.drops) sum += drop;
    report.mean_drop = report.drops.empty() ? 0.0 : sum / static_cast<double>(report.drops.size());
    return report;
}

} // namespace lreid
