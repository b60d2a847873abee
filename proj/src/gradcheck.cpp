#include "lreid/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "lreid/errors.hpp"

namespace lreid {

FiniteDiffReport finite_diff_check(const LossClosure& loss, const std::vector<Parameter*>& params,
                                   Rng rng, const FiniteDiffOptions& options) {
    const double l0 = loss(false);
    const double l1 = loss(false);
    if (l0 != l1)
        throw DeterminismError("finite_diff_check: loss closure is not deterministic (" +
                               std::to_string(l0) + " vs " + std::to_string(l1) + ")");

    for (Parameter* p : params) p->zero_grad();
    loss(true);
    std::vector<Matrix> analytic;
    analytic.reserve(params.size());
    for (Parameter* p : params) analytic.push_back(p->grad);

    FiniteDiffReport report;
    const double h = options.step;
    for (std::size_t pi = 0; pi < params.size(); ++pi) {
        Parameter* p = params[pi];
        const int n = static_cast<int>(p->size());
        if (n == 0) continue;
        int want = std::max(options.min_coords, static_cast<int>(std::ceil(options.sample_fraction * n)));
        want = std::min(want, n);
        Rng coord_rng = rng.stream("coords/" + p->name);
        const std::vector<int> coords = coord_rng.sample_without_replacement(n, want);
        for (int ci : coords) {
            const auto idx = static_cast<std::size_t>(ci);
            const double saved = p->value.data[idx];
            p->value.data[idx] = saved + h;
            const double lp = loss(false);
            p->value.data[idx] = saved - h;
            const double lm = loss(false);
            p->value.data[idx] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double rel = std::abs(analytic[pi].data[idx] - numeric) / std::max(1.0, std::abs(numeric));
            ++report.coords_checked;
            if (rel > report.max_rel_error) {
                report.max_rel_error = rel;
                report.worst_param = p->name;
                report.worst_coord = ci;
            }
        }
    }
    // Leave gradients as the closure produced them.
    for (Parameter* p : params) p->zero_grad();
    loss(true);
    return report;
}

} // namespace lreid
