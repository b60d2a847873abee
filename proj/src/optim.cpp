#include "lreid/optim.hpp"

#include <cmath>

#include "lreid/errors.hpp"

namespace lreid {

void adam_step(const std::vector<Parameter*>& params, OptimizerState& state, double learning_rate) {
    bool any_ready = false;
    for (const Parameter* p : params)
        if (p->grad_ready) any_ready = true;
    if (!any_ready)
        throw EmptyGradientError("adam_step: no gradients populated; run a backward pass first");

    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double bc1 = 1.0 - std::pow(state.beta1, t);
    const double bc2 = 1.0 - std::pow(state.beta2, t);

    for (Parameter* p : params) {
        auto& slot = state.slots[p];
        if (slot.m.rows == 0) {
            slot.m = Matrix(p->value.rows, p->value.cols, 0.0);
            slot.v = Matrix(p->value.rows, p->value.cols, 0.0);
        }
        if (!slot.m.same_shape(p->value))
            throw ShapeError("adam_step: moment shape " + slot.m.shape_str() + " does not match parameter '" +
                             p->name + "' " + p->value.shape_str());
        for (std::size_t i = 0; i < p->value.data.size(); ++i) {
            const double g = p->grad.data[i];
            slot.m.data[i] = state.beta1 * slot.m.data[i] + (1.0 - state.beta1) * g;
            slot.v.data[i] = state.beta2 * slot.v.data[i] + (1.0 - state.beta2) * g * g;
            const double mhat = slot.m.data[i] / bc1;
            const double vhat = slot.v.data[i] / bc2;
            p->value.data[i] -= learning_rate * mhat / (std::sqrt(vhat) + state.eps);
            if (p->decay) p->value.data[i] -= learning_rate * state.weight_decay * p->value.data[i];
        }
        p->zero_grad();
    }
}

double schedule_rate(const Schedule& schedule, int epoch) {
    const int total = schedule.total_epochs;
    if (epoch < 0 || epoch >= total)
        throw RangeError("schedule_rate: epoch " + std::to_string(epoch) + " outside [0, " +
                         std::to_string(total) + ")");
    switch (schedule.kind) {
        case ScheduleKind::Constant:
            return schedule.base_lr;
        case ScheduleKind::CosineDecay: {
            if (total == 1) return schedule.base_lr;
            const double t = static_cast<double>(epoch) / static_cast<double>(total - 1);
            return schedule.floor_lr +
                   (schedule.base_lr - schedule.floor_lr) * 0.5 * (1.0 + std::cos(M_PI * t));
        }
        case ScheduleKind::WarmupThenDecay: {
            const int warmup = schedule.warmup_epochs;
            if (warmup >= total)
                throw RangeError("schedule_rate: warmup epochs must be below total epochs");
            if (epoch < warmup)
                return schedule.base_lr * static_cast<double>(epoch + 1) / static_cast<double>(warmup + 1);
            const int span = total - warmup;
            if (span == 1) return schedule.base_lr;
            const double t = static_cast<double>(epoch - warmup) / static_cast<double>(span - 1);
            return schedule.floor_lr +
                   (schedule.base_lr - schedule.floor_lr) * 0.5 * (1.0 + std::cos(M_PI * t));
        }
    }
    throw RangeError("schedule_rate: unknown schedule kind");
}

} // namespace lreid
