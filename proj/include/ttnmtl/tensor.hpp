#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace ttnmtl {

using Dims = std::vector<std::size_t>;

/// Product of all extents (1 for an empty list).
std::size_t dims_product(std::span<const std::size_t> dims);

/// Dense N-way array of doubles, linearized row-major (last index fastest).
///
/// Axes are 0-based in this API. Documentation and the CLI speak of the
/// mode-1 .. mode-N flattenings; mode-i here is axis i-1.
class Tensor {
public:
    Tensor() = default;

    /// Zero-filled tensor. Throws InvalidArgument on empty dims or a zero extent.
    explicit Tensor(Dims dims);

    /// Takes ownership of data; its length must equal the product of dims.
    Tensor(Dims dims, std::vector<double> data);

    const Dims& dims() const noexcept { return dims_; }
    std::size_t order() const noexcept { return dims_.size(); }
    std::size_t dim(std::size_t axis) const { return dims_.at(axis); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> mutable_data() noexcept { return data_; }

    double operator[](std::size_t flat) const { return data_[flat]; }
    double& operator[](std::size_t flat) { return data_[flat]; }

    /// Element at a multi-index. Bounds are checked.
    double at(std::span<const std::size_t> index) const;

    /// Row-major strides for dims().
    Dims strides() const;

    bool operator==(const Tensor&) const = default;

private:
    Dims dims_;
    std::vector<double> data_;
};

/// Row-major rows x cols matrix.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols);
    Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

    static Matrix identity(std::size_t n);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> mutable_data() noexcept { return data_; }

    Matrix transposed() const;

    bool operator==(const Matrix&) const = default;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

Matrix matmul(const Matrix& a, const Matrix& b);

/// Reorders axes: output axis k is input axis order[k].
Tensor permute(const Tensor& t, std::span<const std::size_t> order);

/// Same linearized data under new extents.
Tensor reshape(const Tensor& t, Dims new_dims);

/// Mode flattening: axis becomes the rows, the remaining axes (in their
/// original order) are the columns. Shape [D_axis, prod_{j != axis} D_j].
Matrix mode_flatten(const Tensor& t, std::size_t axis);

/// Inverse of mode_flatten for a tensor with the given dims.
Tensor fold_mode(const Matrix& m, std::size_t axis, const Dims& dims);

/// Prefix flattening: the first `split` axes index rows, the rest columns.
/// Valid for 1 <= split <= order-1. No data movement.
Matrix prefix_flatten(const Tensor& t, std::size_t split);

/// Inverse of prefix_flatten.
Tensor fold_prefix(const Matrix& m, const Dims& dims);

Matrix to_matrix(const Tensor& t);
Tensor to_tensor(const Matrix& m);

/// Stacks same-shaped tensors along a new trailing axis of size T.
Tensor stack_last(std::span<const Tensor> tensors);

/// Slice `index` of the trailing axis, with that axis removed.
/// A 1-way tensor yields a 1-element tensor of dims {1}.
Tensor slice_last(const Tensor& t, std::size_t index);

/// Elementwise helpers used by the optimizer and the tests.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& t);
void axpy(double alpha, const Tensor& x, Tensor& y);
double frobenius_norm(const Tensor& t);
double frobenius_norm(const Matrix& m);
double inner_product(const Tensor& a, const Tensor& b);

/// T per-task tensors of identical dims and their stacked view.
class ParameterStack {
public:
    explicit ParameterStack(std::vector<Tensor> per_task);

    std::size_t task_count() const noexcept { return per_task_.size(); }
    const Dims& member_dims() const noexcept { return per_task_.front().dims(); }
    const std::vector<Tensor>& per_task() const noexcept { return per_task_; }

    /// Tensor of dims member_dims() x T; the task index is the last axis.
    Tensor stacked() const { return stack_last(per_task_); }

private:
    std::vector<Tensor> per_task_;
};

} // namespace ttnmtl
