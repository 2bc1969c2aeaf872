#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pft {

using Shape = std::vector<std::size_t>;

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when operand shapes do not satisfy an operation's contract.
class ShapeError : public Error {
public:
    using Error::Error;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

/// Row-major strides for `shape` (last stride is 1).
std::vector<std::size_t> row_major_strides(const Shape& shape);

/// Dense row-major N-d array.
///
/// Copies share storage. Values are treated as immutable once a tensor has
/// been handed to an op; the only sanctioned writers are the code that
/// creates a tensor and the optimizer updating parameters between steps.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;
    explicit Tensor(Shape shape);
    Tensor(Shape shape, std::vector<T> values);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
    static Tensor full(Shape shape, T value);
    static Tensor scalar(T value) { return Tensor(Shape{1}, std::vector<T>{value}); }

    bool defined() const { return storage_ != nullptr; }
    const Shape& shape() const;
    std::size_t rank() const { return shape().size(); }
    std::size_t dim(std::size_t axis) const;
    std::size_t numel() const;

    std::span<const T> values() const;
    std::span<T> mutable_values();
    const T* data() const { return values().data(); }

    /// Value of a single-element tensor.
    T item() const;
    T at(std::initializer_list<std::size_t> index) const;

    /// Deep copy with fresh storage.
    Tensor clone() const;

    /// Identity of the underlying storage; equal for copies of one tensor.
    const void* id() const { return storage_.get(); }
    std::shared_ptr<const void> keepalive() const { return storage_; }

private:
    struct Storage {
        Shape shape;
        std::vector<T> values;
    };
    std::shared_ptr<Storage> storage_;
};

template <typename T>
bool all_finite(const Tensor<T>& t);

/// Largest absolute elementwise difference; shapes must match.
template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& t);

}  // namespace pft
