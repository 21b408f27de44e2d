#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ssa/errors.hpp"

namespace ssa {

/// NCHW extent of a 4-D tensor.
struct Shape {
    std::size_t n = 0;
    std::size_t c = 0;
    std::size_t h = 0;
    std::size_t w = 0;

    std::size_t numel() const { return n * c * h * w; }
    std::size_t plane() const { return h * w; }
    bool operator==(const Shape&) const = default;
    std::string str() const;
};

/// Dense row-major (n, c, h, w) array. A default-constructed tensor is empty
/// (all extents zero); any tensor built from a Shape has all extents >= 1.
template <typename T>
class BasicTensor {
public:
    using value_type = T;

    BasicTensor() = default;
    explicit BasicTensor(Shape shape, T fill = T(0));
    BasicTensor(Shape shape, std::vector<T> data);

    static BasicTensor zeros(Shape shape) { return BasicTensor(shape); }
    static BasicTensor full(Shape shape, T value) { return BasicTensor(shape, value); }

    const Shape& shape() const { return shape_; }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    T* ptr() { return data_.data(); }
    const T* ptr() const { return data_.data(); }

    std::size_t index(std::size_t i, std::size_t j, std::size_t y, std::size_t x) const {
        return ((i * shape_.c + j) * shape_.h + y) * shape_.w + x;
    }
    T& operator()(std::size_t i, std::size_t j, std::size_t y, std::size_t x) {
        return data_[index(i, j, y, x)];
    }
    const T& operator()(std::size_t i, std::size_t j, std::size_t y, std::size_t x) const {
        return data_[index(i, j, y, x)];
    }
    /// Bounds-checked element access.
    T& at(std::size_t i, std::size_t j, std::size_t y, std::size_t x);
    const T& at(std::size_t i, std::size_t j, std::size_t y, std::size_t x) const;

    /// Pointer to the (h, w) plane of sample i, channel j.
    T* plane(std::size_t i, std::size_t j) { return data_.data() + index(i, j, 0, 0); }
    const T* plane(std::size_t i, std::size_t j) const { return data_.data() + index(i, j, 0, 0); }

    /// Same data reinterpreted with a new shape of equal element count.
    BasicTensor reshaped(Shape shape) const&;
    BasicTensor reshaped(Shape shape) &&;

    void fill(T value);

    template <typename U>
    BasicTensor<U> cast() const {
        std::vector<U> out(data_.begin(), data_.end());
        return BasicTensor<U>(shape_, std::move(out));
    }

private:
    Shape shape_{};
    std::vector<T> data_;
};

using Tensor = BasicTensor<float>;
using TensorD = BasicTensor<double>;

/// Throws DimensionError unless every extent is at least 1.
void validate_shape(const Shape& shape);

/// Throws DimensionError naming `what` if the shapes differ.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b);

/// True if every element is finite.
template <typename T>
bool all_finite(const BasicTensor<T>& t);

}  // namespace ssa
