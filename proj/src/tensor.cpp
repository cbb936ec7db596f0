#include "ttnmtl/tensor.hpp"

#include "ttnmtl/errors.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

namespace ttnmtl {

namespace {

std::string dims_string(const Dims& dims) {
    std::string s = "[";
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(dims[i]);
    }
    return s + "]";
}

void check_dims(const Dims& dims) {
    if (dims.empty()) throw InvalidArgument("tensor dims must be non-empty");
    for (auto d : dims)
        if (d == 0) throw InvalidArgument("tensor extent must be >= 1, got " + dims_string(dims));
}

// Splits dims around `axis` into (product before, extent, product after).
struct AxisSplit {
    std::size_t outer, extent, inner;
};

AxisSplit split_at(const Dims& dims, std::size_t axis) {
    AxisSplit s{1, dims[axis], 1};
    for (std::size_t j = 0; j < axis; ++j) s.outer *= dims[j];
    for (std::size_t j = axis + 1; j < dims.size(); ++j) s.inner *= dims[j];
    return s;
}

} // namespace

std::size_t dims_product(std::span<const std::size_t> dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

Tensor::Tensor(Dims dims) : dims_(std::move(dims)) {
    check_dims(dims_);
    data_.assign(dims_product(dims_), 0.0);
}

Tensor::Tensor(Dims dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
    check_dims(dims_);
    if (data_.size() != dims_product(dims_))
        throw InvalidArgument("tensor data length " + std::to_string(data_.size()) +
                              " does not match dims " + dims_string(dims_));
}

double Tensor::at(std::span<const std::size_t> index) const {
    if (index.size() != dims_.size()) throw InvalidArgument("index rank does not match tensor order");
    std::size_t flat = 0;
    for (std::size_t k = 0; k < dims_.size(); ++k) {
        if (index[k] >= dims_[k]) throw InvalidArgument("tensor index out of range");
        flat = flat * dims_[k] + index[k];
    }
    return data_[flat];
}

Dims Tensor::strides() const {
    Dims s(dims_.size(), 1);
    for (std::size_t k = dims_.size(); k-- > 1;) s[k - 1] = s[k] * dims_[k];
    return s;
}

Matrix::Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols)
        throw InvalidArgument("matrix data length " + std::to_string(data_.size()) + " does not match " +
                              std::to_string(rows) + "x" + std::to_string(cols));
}

Matrix Matrix::identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
}

Matrix Matrix::transposed() const {
    Matrix t(cols_, rows_);
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
    return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw InvalidArgument("matmul inner dimensions differ");
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) += aik * b(k, j);
        }
    return out;
}

Tensor permute(const Tensor& t, std::span<const std::size_t> order) {
    const std::size_t n = t.order();
    if (order.size() != n) throw InvalidArgument("permutation length does not match tensor order");
    std::vector<bool> seen(n, false);
    for (auto a : order) {
        if (a >= n || seen[a]) throw InvalidArgument("order is not a permutation of the tensor axes");
        seen[a] = true;
    }

    Dims out_dims(n);
    for (std::size_t k = 0; k < n; ++k) out_dims[k] = t.dim(order[k]);
    Tensor out(out_dims);

    // Walk the output in row-major order, tracking the matching input offset.
    const Dims in_strides = t.strides();
    Dims step(n);
    for (std::size_t k = 0; k < n; ++k) step[k] = in_strides[order[k]];

    std::vector<std::size_t> idx(n, 0);
    std::size_t src = 0;
    auto in = t.data();
    auto dst = out.mutable_data();
    for (std::size_t flat = 0; flat < dst.size(); ++flat) {
        dst[flat] = in[src];
        for (std::size_t k = n; k-- > 0;) {
            if (++idx[k] < out_dims[k]) {
                src += step[k];
                break;
            }
            src -= step[k] * (out_dims[k] - 1);
            idx[k] = 0;
        }
    }
    return out;
}

Tensor reshape(const Tensor& t, Dims new_dims) {
    check_dims(new_dims);
    if (dims_product(new_dims) != t.size())
        throw InvalidArgument("reshape to " + dims_string(new_dims) + " changes element count of " +
                              dims_string(t.dims()));
    return Tensor(std::move(new_dims), std::vector<double>(t.data().begin(), t.data().end()));
}

Matrix mode_flatten(const Tensor& t, std::size_t axis) {
    if (axis >= t.order())
        throw InvalidArgument("mode axis " + std::to_string(axis) + " out of range for order " +
                              std::to_string(t.order()));
    const auto [outer, extent, inner] = split_at(t.dims(), axis);
    Matrix m(extent, outer * inner);
    auto in = t.data();
    for (std::size_t a = 0; a < outer; ++a)
        for (std::size_t d = 0; d < extent; ++d) {
            const std::size_t base = (a * extent + d) * inner;
            for (std::size_t b = 0; b < inner; ++b) m(d, a * inner + b) = in[base + b];
        }
    return m;
}

Tensor fold_mode(const Matrix& m, std::size_t axis, const Dims& dims) {
    check_dims(dims);
    if (axis >= dims.size()) throw InvalidArgument("fold axis out of range");
    const auto [outer, extent, inner] = split_at(dims, axis);
    if (m.rows() != extent || m.cols() != outer * inner)
        throw InvalidArgument("matrix shape does not match mode flattening of " + dims_string(dims));
    Tensor t(dims);
    auto out = t.mutable_data();
    for (std::size_t a = 0; a < outer; ++a)
        for (std::size_t d = 0; d < extent; ++d) {
            const std::size_t base = (a * extent + d) * inner;
            for (std::size_t b = 0; b < inner; ++b) out[base + b] = m(d, a * inner + b);
        }
    return t;
}

Matrix prefix_flatten(const Tensor& t, std::size_t split) {
    if (split < 1 || split >= t.order())
        throw InvalidArgument("prefix split " + std::to_string(split) + " out of range for order " +
                              std::to_string(t.order()));
    const std::size_t rows = dims_product(std::span(t.dims()).first(split));
    return Matrix(rows, t.size() / rows, std::vector<double>(t.data().begin(), t.data().end()));
}

Tensor fold_prefix(const Matrix& m, const Dims& dims) {
    if (m.rows() * m.cols() != dims_product(dims))
        throw InvalidArgument("matrix size does not match " + dims_string(dims));
    return Tensor(dims, std::vector<double>(m.data().begin(), m.data().end()));
}

Matrix to_matrix(const Tensor& t) {
    if (t.order() != 2) throw InvalidArgument("to_matrix needs a 2-way tensor");
    return Matrix(t.dim(0), t.dim(1), std::vector<double>(t.data().begin(), t.data().end()));
}

Tensor to_tensor(const Matrix& m) {
    return Tensor({m.rows(), m.cols()}, std::vector<double>(m.data().begin(), m.data().end()));
}

Tensor stack_last(std::span<const Tensor> tensors) {
    if (tensors.empty()) throw InvalidArgument("stack_last needs at least one tensor");
    const Dims& dims = tensors.front().dims();
    for (const auto& t : tensors)
        if (t.dims() != dims)
            throw InvalidArgument("stack_last shape mismatch: " + dims_string(dims) + " vs " +
                                  dims_string(t.dims()));
    const std::size_t count = tensors.size();
    Dims out_dims = dims;
    out_dims.push_back(count);
    Tensor out(out_dims);
    auto dst = out.mutable_data();
    for (std::size_t task = 0; task < count; ++task) {
        auto src = tensors[task].data();
        for (std::size_t i = 0; i < src.size(); ++i) dst[i * count + task] = src[i];
    }
    return out;
}

Tensor slice_last(const Tensor& t, std::size_t index) {
    const std::size_t count = t.dims().back();
    if (index >= count) throw InvalidArgument("slice index out of range");
    Dims dims(t.dims().begin(), t.dims().end() - 1);
    if (dims.empty()) dims.push_back(1);
    Tensor out(dims);
    auto dst = out.mutable_data();
    auto src = t.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = src[i * count + index];
    return out;
}

namespace {

void require_same(const Tensor& a, const Tensor& b) {
    if (a.dims() != b.dims())
        throw InvalidArgument("shape mismatch: " + dims_string(a.dims()) + " vs " + dims_string(b.dims()));
}

} // namespace

Tensor operator+(const Tensor& a, const Tensor& b) {
    require_same(a, b);
    Tensor out = a;
    axpy(1.0, b, out);
    return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
    require_same(a, b);
    Tensor out = a;
    axpy(-1.0, b, out);
    return out;
}

Tensor operator*(double s, const Tensor& t) {
    Tensor out = t;
    for (auto& v : out.mutable_data()) v *= s;
    return out;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
    require_same(x, y);
    auto src = x.data();
    auto dst = y.mutable_data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += alpha * src[i];
}

double frobenius_norm(const Tensor& t) { return std::sqrt(inner_product(t, t)); }

double frobenius_norm(const Matrix& m) {
    double s = 0.0;
    for (double v : m.data()) s += v * v;
    return std::sqrt(s);
}

double inner_product(const Tensor& a, const Tensor& b) {
    require_same(a, b);
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

ParameterStack::ParameterStack(std::vector<Tensor> per_task) : per_task_(std::move(per_task)) {
    if (per_task_.empty()) throw InvalidArgument("parameter stack needs at least one task");
    for (const auto& t : per_task_)
        if (t.dims() != per_task_.front().dims())
            throw InvalidArgument("parameter stack members must share dims");
}

} // namespace ttnmtl
