#pragma once

#include "midlevel/error.hpp"

#include <algorithm>
#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace midlevel::nn {

/// Batch x channels x height x width.
struct Shape {
    std::size_t n = 0, c = 0, h = 0, w = 0;

    std::size_t size() const noexcept { return n * c * h * w; }
    std::size_t per_sample() const noexcept { return c * h * w; }
    bool operator==(const Shape&) const = default;
};

inline std::string to_string(const Shape& s)
{
    return "[" + std::to_string(s.n) + "x" + std::to_string(s.c) + "x" + std::to_string(s.h) + "x" +
           std::to_string(s.w) + "]";
}

/// Dense NCHW array of doubles. Fully connected data uses h = w = 1.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape s, double fill = 0.0) : shape_(s), data_(s.size(), fill) {}
    Tensor(Shape s, std::vector<double> data) : shape_(s), data_(std::move(data))
    {
        if (data_.size() != shape_.size())
            throw Error(Errc::ShapeMismatch, "data size does not match shape " + to_string(shape_));
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t size() const noexcept { return data_.size(); }
    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }
    std::vector<double>& values() noexcept { return data_; }
    const std::vector<double>& values() const noexcept { return data_; }

    double& operator[](std::size_t i) noexcept { return data_[i]; }
    double operator[](std::size_t i) const noexcept { return data_[i]; }
    double& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept
    {
        return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }
    double at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept
    {
        return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
    }

    std::span<double> sample(std::size_t n) noexcept
    {
        return {data_.data() + n * shape_.per_sample(), shape_.per_sample()};
    }
    std::span<const double> sample(std::size_t n) const noexcept
    {
        return {data_.data() + n * shape_.per_sample(), shape_.per_sample()};
    }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }
    void reshape(Shape s)
    {
        if (s.size() != data_.size())
            throw Error(Errc::ShapeMismatch, "cannot reshape " + to_string(shape_) + " to " + to_string(s));
        shape_ = s;
    }

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

} // namespace midlevel::nn
