#include "dtlab/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "dtlab/errors.hpp"

namespace dtlab {

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

static void check_shape_entries(const Shape& shape) {
    for (auto d : shape) {
        if (d == 0) throw DimensionError("tensor shape " + shape_string(shape) + " has a zero extent");
    }
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
    check_shape_entries(shape_);
    data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_shape_entries(shape_);
    if (shape_numel(shape_) != data_.size()) {
        throw DimensionError("tensor shape " + shape_string(shape_) + " needs " +
                             std::to_string(shape_numel(shape_)) + " values, got " +
                             std::to_string(data_.size()));
    }
}

Tensor Tensor::from(std::initializer_list<std::size_t> shape, std::initializer_list<double> values) {
    return Tensor(Shape(shape), std::vector<double>(values));
}

std::size_t Tensor::dim(std::size_t i) const {
    if (i >= shape_.size()) {
        throw IndexError("axis " + std::to_string(i) + " out of range for shape " + shape_string(shape_));
    }
    return shape_[i];
}

double Tensor::item() const {
    if (data_.size() != 1) throw ContractError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
}

std::vector<double>& Tensor::grad() {
    if (!grad_) grad_.emplace(data_.size(), 0.0);
    return *grad_;
}

const std::vector<double>& Tensor::grad() const {
    if (!grad_) throw ContractError("tensor has no gradient");
    return *grad_;
}

void Tensor::zero_grad() {
    if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
}

Tensor stack(std::span<const Tensor> items) {
    if (items.empty()) throw ContractError("stack of zero tensors");
    const Shape& inner = items.front().shape();
    Shape shape{items.size()};
    shape.insert(shape.end(), inner.begin(), inner.end());
    std::vector<double> data;
    data.reserve(shape_numel(shape));
    for (const auto& t : items) {
        if (t.shape() != inner) {
            throw DimensionError("stack: shape " + shape_string(t.shape()) + " differs from " +
                                 shape_string(inner));
        }
        data.insert(data.end(), t.vec().begin(), t.vec().end());
    }
    return Tensor(std::move(shape), std::move(data));
}

Tensor unstack_one(const Tensor& batch, std::size_t i) {
    if (batch.ndim() < 1 || i >= batch.dim(0)) throw IndexError("unstack index out of range");
    Shape inner(batch.shape().begin() + 1, batch.shape().end());
    const std::size_t n = shape_numel(inner);
    auto first = batch.vec().begin() + static_cast<std::ptrdiff_t>(i * n);
    return Tensor(std::move(inner), std::vector<double>(first, first + static_cast<std::ptrdiff_t>(n)));
}

double max_abs(std::span<const double> v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw DimensionError("max_abs_diff length mismatch");
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace dtlab
