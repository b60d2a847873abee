#pragma once

#include <unordered_map>
#include <vector>

#include "lreid/layers.hpp"

namespace lreid {

// Adam with decoupled weight decay. Moment slots are keyed by parameter
// identity; one state must not be shared across concurrent trainers.
struct OptimizerState {
    double base_lr = 1e-3;
    double weight_decay = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step_count = 0;

    struct Slot {
        Matrix m, v;
    };
    std::unordered_map<const Parameter*, Slot> slots;
};

// One bias-corrected update at the given learning rate; applies decoupled
// weight decay to decay-eligible parameters and zeroes gradients afterwards.
// Throws EmptyGradientError when no parameter has a populated gradient.
void adam_step(const std::vector<Parameter*>& params, OptimizerState& state, double learning_rate);

enum class ScheduleKind { CosineDecay, WarmupThenDecay, Constant };

struct Schedule {
    ScheduleKind kind = ScheduleKind::CosineDecay;
    int total_epochs = 1;
    int warmup_epochs = 0; // used by WarmupThenDecay
    double base_lr = 1e-3;
    double floor_lr = 0.0;
};

// Learning rate for an epoch in [0, total_epochs). Cosine: base at epoch 0,
// floor at the final epoch, nonincreasing. Warmup: linear ramp to base over
// warmup_epochs, then cosine to floor.
double schedule_rate(const Schedule& schedule, int epoch);

} // namespace lreid
