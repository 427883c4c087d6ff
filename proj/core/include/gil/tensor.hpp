#pragma once

#include <cstdint>
#include <vector>

namespace gil {

/// Dense row-major matrix of 64-bit floats. All training math runs at
/// 64-bit precision; 32-bit floats are used in checkpoint files only.
///
/// Invariants: rows*cols == values.size(); every completed operation
/// leaves only finite values (violations raise NumericError).
struct Tensor {
    std::int64_t rows = 0;
    std::int64_t cols = 0;
    std::vector<double> values;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::int64_t r, std::int64_t c, bool grad = false);
    Tensor(std::int64_t r, std::int64_t c, std::vector<double> vals, bool grad = false);

    static Tensor scalar(double v, bool grad = false);
    static Tensor row(std::vector<double> vals, bool grad = false);
    static Tensor column(std::vector<double> vals, bool grad = false);

    std::int64_t numel() const { return rows * cols; }
    bool is_scalar() const { return rows == 1 && cols == 1; }

    double& at(std::int64_t r, std::int64_t c) { return values[static_cast<std::size_t>(r * cols + c)]; }
    double at(std::int64_t r, std::int64_t c) const { return values[static_cast<std::size_t>(r * cols + c)]; }

    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

    /// Raises NumericError if any stored value is NaN or infinite.
    void check_finite(const char* context) const;
};

/// Max |a-b| over all entries; shapes must agree.
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Exact element-wise equality (bit-for-bit on the stored doubles).
bool bit_equal(const Tensor& a, const Tensor& b);

}  // namespace gil
