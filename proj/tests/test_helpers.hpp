#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "doctest.h"
#include "gil/optim.hpp"
#include "gil/rng.hpp"
#include "gil/tape.hpp"
#include "gil/tensor.hpp"

namespace gil::test {

inline Tensor random_tensor(std::int64_t rows, std::int64_t cols, Rng& rng, double scale = 1.0,
                            bool grad = false) {
    Tensor t(rows, cols, grad);
    for (double& v : t.values) v = rng.normal() * scale;
    return t;
}

/// Gradient agreement rule used everywhere: per element, either the
/// relative error is below rel_tol or the absolute error is below abs_tol.
inline void check_grad_close(const Tensor& analytic, const Tensor& numeric, double rel_tol = 1e-4,
                             double abs_tol = 1e-7) {
    REQUIRE(analytic.same_shape(numeric));
    for (std::size_t i = 0; i < analytic.values.size(); ++i) {
        const double a = analytic.values[i];
        const double b = numeric.values[i];
        const double diff = std::fabs(a - b);
        const double scale = std::max(std::fabs(a), std::fabs(b));
        INFO("element ", i, ": analytic=", a, " numeric=", b);
        CHECK((diff <= abs_tol || diff <= rel_tol * scale));
    }
}

/// Checks backward() against finite differences for a scalar-valued graph
/// of one variable input (other inputs baked into the builder).
inline void gradcheck(const std::function<GradTape::ValueId(GradTape&, GradTape::ValueId)>& build,
                      const Tensor& x, double h = 1e-5) {
    GradTape tape;
    Tensor input = x;
    input.requires_grad = true;
    auto xid = tape.leaf(input);
    auto loss = build(tape, xid);
    tape.backward(loss);
    const Tensor analytic = tape.grad(xid);

    auto f = [&](const Tensor& probe) {
        GradTape t2;
        Tensor p = probe;
        p.requires_grad = false;
        auto pid = t2.leaf(std::move(p));
        return t2.value(build(t2, pid)).values[0];
    };
    const Tensor numeric = finite_diff_grad(f, x, h);
    check_grad_close(analytic, numeric);
}

}  // namespace gil::test
