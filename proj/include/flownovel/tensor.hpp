#pragma once

#include <cstddef>
#include <initializer_list>
#include <vector>

#include "flownovel/errors.hpp"
#include "flownovel/rng.hpp"

namespace flownovel::ad {

// Dense row-major tensor of doubles. Value-semantic: copies are deep and
// tensors are safe to move across threads. Everything in the library is
// 64-bit; log-determinant accumulation and ODE integration are too
// precision-sensitive for floats.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double value);
    static Tensor ones(std::vector<int> shape) { return full(std::move(shape), 1.0); }
    static Tensor scalar(double value) { return Tensor({1}, {value}); }
    static Tensor randn(std::vector<int> shape, Rng& rng);
    static Tensor uniform(std::vector<int> shape, double lo, double hi, Rng& rng);

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    std::size_t numel() const { return data_.size(); }
    bool is_scalar() const { return data_.size() == 1; }
    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    // rank-2 accessors
    int rows() const;
    int cols() const;
    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * cols() + j]; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double item() const;
    bool all_finite() const;

    // in-place helpers used by the optimizer and data pipeline
    void fill(double value);
    Tensor& add_scaled(const Tensor& other, double alpha); // this += alpha * other

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

} // namespace flownovel::ad
