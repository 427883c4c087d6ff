#include "gil/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>

#include "gil/errors.hpp"

namespace gil {

Tensor::Tensor(std::int64_t r, std::int64_t c, bool grad)
    : rows(r), cols(c), values(static_cast<std::size_t>(r * c), 0.0), requires_grad(grad) {
    if (r < 0 || c < 0) throw ShapeError("negative tensor dimension");
}

Tensor::Tensor(std::int64_t r, std::int64_t c, std::vector<double> vals, bool grad)
    : rows(r), cols(c), values(std::move(vals)), requires_grad(grad) {
    if (r < 0 || c < 0) throw ShapeError("negative tensor dimension");
    if (static_cast<std::size_t>(r * c) != values.size())
        throw ShapeError("tensor shape " + std::to_string(r) + "x" + std::to_string(c) +
                         " does not match " + std::to_string(values.size()) + " values");
}

Tensor Tensor::scalar(double v, bool grad) { return Tensor(1, 1, {v}, grad); }

Tensor Tensor::row(std::vector<double> vals, bool grad) {
    auto n = static_cast<std::int64_t>(vals.size());
    return Tensor(1, n, std::move(vals), grad);
}

Tensor Tensor::column(std::vector<double> vals, bool grad) {
    auto n = static_cast<std::int64_t>(vals.size());
    return Tensor(n, 1, std::move(vals), grad);
}

void Tensor::check_finite(const char* context) const {
    for (double v : values) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string("non-finite value produced by ") + context);
        }
    }
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) throw ShapeError("max_abs_diff: shape mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.values.size(); ++i) {
        m = std::max(m, std::fabs(a.values[i] - b.values[i]));
    }
    return m;
}

bool bit_equal(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b)) return false;
    return a.values.empty() ||
           std::memcmp(a.values.data(), b.values.data(), a.values.size() * sizeof(double)) == 0;
}

}  // namespace gil
