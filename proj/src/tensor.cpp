#include "ssa/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ssa {

std::string Shape::str() const {
    std::ostringstream os;
    os << n << "x" << c << "x" << h << "x" << w;
    return os.str();
}

void validate_shape(const Shape& shape) {
    if (shape.n == 0 || shape.c == 0 || shape.h == 0 || shape.w == 0) {
        throw DimensionError("tensor extents must all be >= 1, got " + shape.str());
    }
}

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
    if (a == b) return;
    std::string axes;
    if (a.n != b.n) axes += " n";
    if (a.c != b.c) axes += " c";
    if (a.h != b.h) axes += " h";
    if (a.w != b.w) axes += " w";
    throw DimensionError(std::string(what) + ": shape " + a.str() + " vs " + b.str() +
                         " (mismatched axes:" + axes + ")");
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, T fill) : shape_(shape) {
    validate_shape(shape);
    data_.assign(shape.numel(), fill);
}

template <typename T>
BasicTensor<T>::BasicTensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    validate_shape(shape);
    if (data_.size() != shape.numel()) {
        throw DimensionError("data length " + std::to_string(data_.size()) + " does not match shape " +
                             shape.str());
    }
}

template <typename T>
T& BasicTensor<T>::at(std::size_t i, std::size_t j, std::size_t y, std::size_t x) {
    if (i >= shape_.n || j >= shape_.c || y >= shape_.h || x >= shape_.w) {
        throw DimensionError("index out of range for shape " + shape_.str());
    }
    return (*this)(i, j, y, x);
}

template <typename T>
const T& BasicTensor<T>::at(std::size_t i, std::size_t j, std::size_t y, std::size_t x) const {
    return const_cast<BasicTensor*>(this)->at(i, j, y, x);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) const& {
    BasicTensor copy = *this;
    return std::move(copy).reshaped(shape);
}

template <typename T>
BasicTensor<T> BasicTensor<T>::reshaped(Shape shape) && {
    validate_shape(shape);
    if (shape.numel() != data_.size()) {
        throw DimensionError("cannot reshape " + shape_.str() + " to " + shape.str());
    }
    BasicTensor out;
    out.shape_ = shape;
    out.data_ = std::move(data_);
    shape_ = Shape{};
    data_.clear();
    return out;
}

template <typename T>
void BasicTensor<T>::fill(T value) {
    std::fill(data_.begin(), data_.end(), value);
}

template <typename T>
double max_abs_diff(const BasicTensor<T>& a, const BasicTensor<T>& b) {
    require_same_shape(a.shape(), b.shape(), "max_abs_diff");
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(a.ptr()[i]) - static_cast<double>(b.ptr()[i])));
    }
    return m;
}

template <typename T>
bool all_finite(const BasicTensor<T>& t) {
    return std::all_of(t.data().begin(), t.data().end(), [](T v) { return std::isfinite(v); });
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template double max_abs_diff(const BasicTensor<float>&, const BasicTensor<float>&);
template double max_abs_diff(const BasicTensor<double>&, const BasicTensor<double>&);
template bool all_finite(const BasicTensor<float>&);
template bool all_finite(const BasicTensor<double>&);

}  // namespace ssa
