#include "gil/optim.hpp"

#include <cmath>
#include <string>

#include "gil/errors.hpp"

namespace gil {

double lr_at(const LrSchedule& schedule, std::int64_t step) {
    if (step < 0) throw UsageError("lr_at: negative step");
    if (schedule.warmup_steps <= 0 || step >= schedule.warmup_steps) return schedule.base_lr;
    return schedule.base_lr * static_cast<double>(step) / static_cast<double>(schedule.warmup_steps);
}

AdamState make_adam_state(const std::vector<const Tensor*>& params, double base_lr) {
    AdamState state;
    state.base_lr = base_lr;
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const Tensor* p : params) {
        state.m.emplace_back(p->rows, p->cols);
        state.v.emplace_back(p->rows, p->cols);
    }
    return state;
}

void adam_step(const std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads,
               AdamState& state, double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw UsageError("adam_step: parameter/gradient/state counts disagree");
    state.t += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& p = *params[i];
        const Tensor& g = *grads[i];
        Tensor& m = state.m[i];
        Tensor& v = state.v[i];
        if (!p.same_shape(g) || !p.same_shape(m))
            throw UsageError("adam_step: shape mismatch at parameter " + std::to_string(i));
        for (std::size_t j = 0; j < p.values.size(); ++j) {
            const double gj = g.values[j];
            m.values[j] = state.beta1 * m.values[j] + (1.0 - state.beta1) * gj;
            v.values[j] = state.beta2 * v.values[j] + (1.0 - state.beta2) * gj * gj;
            const double mhat = m.values[j] / bc1;
            const double vhat = v.values[j] / bc2;
            p.values[j] -= lr * mhat / (std::sqrt(vhat) + state.epsilon);
        }
    }
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& f, const Tensor& x, double h) {
    if (h <= 0.0) throw UsageError("finite_diff_grad: h must be positive");
    Tensor grad(x.rows, x.cols);
    Tensor probe = x;
    for (std::size_t i = 0; i < x.values.size(); ++i) {
        const double orig = probe.values[i];
        probe.values[i] = orig + h;
        const double fp = f(probe);
        probe.values[i] = orig - h;
        const double fm = f(probe);
        probe.values[i] = orig;
        grad.values[i] = (fp - fm) / (2.0 * h);
    }
    return grad;
}

}  // namespace gil
