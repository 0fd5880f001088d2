#include "flownovel/tensor.hpp"

#include <cmath>
#include <cstddef>

namespace flownovel::ad {

namespace {

std::size_t shape_numel(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
        if (d < 0) throw contract_error("tensor: negative dimension");
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

} // namespace

Tensor::Tensor(std::vector<int> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size())
        throw contract_error("tensor: shape does not match data length");
}

Tensor Tensor::full(std::vector<int> shape, double value) {
    Tensor t(std::move(shape));
    t.fill(value);
    return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = rng.normal();
    return t;
}

Tensor Tensor::uniform(std::vector<int> shape, double lo, double hi, Rng& rng) {
    Tensor t(std::move(shape));
    for (double& x : t.data_) x = rng.uniform(lo, hi);
    return t;
}

int Tensor::rows() const {
    if (shape_.size() != 2) throw contract_error("tensor: rows() requires rank 2");
    return shape_[0];
}

int Tensor::cols() const {
    if (shape_.size() != 2) throw contract_error("tensor: cols() requires rank 2");
    return shape_[1];
}

double Tensor::item() const {
    if (data_.size() != 1) throw contract_error("tensor: item() requires a scalar");
    return data_[0];
}

bool Tensor::all_finite() const {
    for (double x : data_)
        if (!std::isfinite(x)) return false;
    return true;
}

void Tensor::fill(double value) {
    for (double& x : data_) x = value;
}

Tensor& Tensor::add_scaled(const Tensor& other, double alpha) {
    if (!same_shape(other)) throw contract_error("tensor: add_scaled shape mismatch");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * other.data_[i];
    return *this;
}

} // namespace flownovel::ad
