#pragma once

#include <functional>
#include <string>
#include <vector>

#include "lreid/layers.hpp"
#include "lreid/rng.hpp"

namespace lreid {

// A loss closure evaluates the loss; when with_grad is true it must also
// accumulate analytic gradients into the registered parameters. It must be
// deterministic: two evaluations at equal parameter values must agree bitwise.
using LossClosure = std::function<double(bool with_grad)>;

struct FiniteDiffOptions {
    double step = 1e-4;            // central-difference half step
    double sample_fraction = 0.05; // coordinates checked per parameter
    int min_coords = 10;           // lower bound, capped at the parameter size
};

struct FiniteDiffReport {
    double max_rel_error = 0.0;
    std::string worst_param;
    int worst_coord = -1;
    int coords_checked = 0;
};

// Central-difference check of the closure's analytic gradients on a random
// coordinate sample. Returns max |analytic - numeric| / max(1, |numeric|).
// Throws DeterminismError when two evaluations of the closure differ.
FiniteDiffReport finite_diff_check(const LossClosure& loss, const std::vector<Parameter*>& params,
                                   Rng rng, const FiniteDiffOptions& options = {});

} // namespace lreid
