#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <string>
#include <vector>

#include "acnn/errors.hpp"

namespace acnn {

// Dense row-major tensor of arbitrary rank. Scalar is float for training
// and double for the oracle/gradient-check instantiations.
template <typename Scalar>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<std::size_t>(numel_of(shape_)), Scalar(0));
    }

    Tensor(std::vector<std::int64_t> shape, std::vector<Scalar> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        if (numel_of(shape_) != static_cast<std::int64_t>(data_.size()))
            throw ShapeError("tensor data length does not match shape");
    }

    static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

    const std::vector<std::int64_t>& shape() const { return shape_; }
    int rank() const { return static_cast<int>(shape_.size()); }
    std::int64_t dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }

    Scalar* data() { return data_.data(); }
    const Scalar* data() const { return data_.data(); }
    std::vector<Scalar>& values() { return data_; }
    const std::vector<Scalar>& values() const { return data_; }

    Scalar& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    Scalar operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    Scalar& operator()(std::int64_t i, std::int64_t j) {
        return data_[static_cast<std::size_t>(i * shape_[1] + j)];
    }
    Scalar operator()(std::int64_t i, std::int64_t j) const {
        return data_[static_cast<std::size_t>(i * shape_[1] + j)];
    }
    Scalar& operator()(std::int64_t i, std::int64_t j, std::int64_t k) {
        return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    Scalar operator()(std::int64_t i, std::int64_t j, std::int64_t k) const {
        return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }

    void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (Scalar v : data_)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename Other>
    Tensor<Other> cast() const {
        std::vector<Other> out(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<Other>(data_[i]);
        return Tensor<Other>(shape_, std::move(out));
    }

    static std::int64_t numel_of(const std::vector<std::int64_t>& shape) {
        std::int64_t n = 1;
        for (std::int64_t d : shape) {
            if (d <= 0) throw ShapeError("tensor dims must be positive");
            n *= d;
        }
        return n;
    }

private:
    std::vector<std::int64_t> shape_;
    std::vector<Scalar> data_;
};

template <typename Scalar>
std::string shape_string(const Tensor<Scalar>& t) {
    std::string s = "[";
    for (int i = 0; i < t.rank(); ++i) s += (i ? "," : "") + std::to_string(t.dim(i));
    return s + "]";
}

}  // namespace acnn
