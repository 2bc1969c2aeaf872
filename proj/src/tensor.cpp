#include "pft/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pft {

std::size_t shape_numel(const Shape& shape) {
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

std::vector<std::size_t> row_major_strides(const Shape& shape) {
    std::vector<std::size_t> strides(shape.size(), 1);
    for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
    return strides;
}

template <typename T>
Tensor<T>::Tensor(Shape shape)
    : storage_(std::make_shared<Storage>()) {
    storage_->values.assign(shape_numel(shape), T(0));
    storage_->shape = std::move(shape);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values)
    : storage_(std::make_shared<Storage>()) {
    if (values.size() != shape_numel(shape)) {
        throw ShapeError("tensor: " + std::to_string(values.size()) + " values do not fill shape " +
                         shape_str(shape));
    }
    storage_->shape = std::move(shape);
    storage_->values = std::move(values);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.storage_->values.begin(), t.storage_->values.end(), value);
    return t;
}

template <typename T>
const Shape& Tensor<T>::shape() const {
    if (!storage_) throw Error("tensor: use of undefined tensor");
    return storage_->shape;
}

template <typename T>
std::size_t Tensor<T>::dim(std::size_t axis) const {
    const Shape& s = shape();
    if (axis >= s.size()) {
        throw ShapeError("tensor: axis " + std::to_string(axis) + " out of range for " + shape_str(s));
    }
    return s[axis];
}

template <typename T>
std::size_t Tensor<T>::numel() const {
    return values().size();
}

template <typename T>
std::span<const T> Tensor<T>::values() const {
    if (!storage_) throw Error("tensor: use of undefined tensor");
    return storage_->values;
}

template <typename T>
std::span<T> Tensor<T>::mutable_values() {
    if (!storage_) throw Error("tensor: use of undefined tensor");
    return storage_->values;
}

template <typename T>
T Tensor<T>::item() const {
    if (numel() != 1) throw ShapeError("tensor: item() on shape " + shape_str(shape()));
    return storage_->values[0];
}

template <typename T>
T Tensor<T>::at(std::initializer_list<std::size_t> index) const {
    const Shape& s = shape();
    if (index.size() != s.size()) throw ShapeError("tensor: index rank mismatch for " + shape_str(s));
    std::size_t offset = 0;
    std::size_t axis = 0;
    for (std::size_t i : index) {
        if (i >= s[axis]) throw ShapeError("tensor: index out of range for " + shape_str(s));
        offset = offset * s[axis] + i;
        ++axis;
    }
    return storage_->values[offset];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    return Tensor(shape(), std::vector<T>(values().begin(), values().end()));
}

template <typename T>
bool all_finite(const Tensor<T>& t) {
    return std::all_of(t.values().begin(), t.values().end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw ShapeError("max_abs_diff: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    double m = 0.0;
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < av.size(); ++i) {
        m = std::max(m, std::abs(static_cast<double>(av[i]) - static_cast<double>(bv[i])));
    }
    return m;
}

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t) {
    std::vector<To> out(t.values().begin(), t.values().end());
    return Tensor<To>(t.shape(), std::move(out));
}

template class Tensor<float>;
template class Tensor<double>;
template bool all_finite(const Tensor<float>&);
template bool all_finite(const Tensor<double>&);
template double max_abs_diff(const Tensor<float>&, const Tensor<float>&);
template double max_abs_diff(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> cast(const Tensor<float>&);
template Tensor<float> cast(const Tensor<double>&);
template Tensor<double> cast(const Tensor<float>&);
template Tensor<double> cast(const Tensor<double>&);

}  // namespace pft
