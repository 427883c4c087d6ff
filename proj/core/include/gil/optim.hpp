#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "gil/tensor.hpp"

namespace gil {

/// Linear warm-up to base_lr over warmup_steps, constant afterwards.
struct LrSchedule {
    double base_lr = 0.0005;
    std::int64_t warmup_steps = 5000;
};

double lr_at(const LrSchedule& schedule, std::int64_t step);

/// Adam moment state. One m/v pair per parameter tensor, same shapes;
/// t counts completed steps and increments by exactly one per step.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    double base_lr = 0.0005;
    std::int64_t t = 0;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
};

AdamState make_adam_state(const std::vector<const Tensor*>& params, double base_lr);

/// One bias-corrected Adam update over a matched parameter/gradient list.
void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, double lr);

/// Central finite differences: (f(x + h e_i) - f(x - h e_i)) / 2h per
/// coordinate. Verification oracle; never touches the tape.
Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h);

}  // namespace gil
