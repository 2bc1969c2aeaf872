#pragma once

#include <functional>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "pft/tensor.hpp"

namespace pft {

/// dLoss/dθ for every tensor watched by a tape.
template <typename T>
class GradientMap {
public:
    /// Gradient of a watched tensor. Watched tensors that did not influence
    /// the loss get zeros of their own shape.
    Tensor<T> at(const Tensor<T>& watched) const;
    bool contains(const Tensor<T>& t) const { return grads_.count(t.id()) != 0; }
    std::size_t size() const { return grads_.size(); }

private:
    template <typename>
    friend class GradTape;
    std::unordered_map<const void*, Tensor<T>> grads_;
};

/// Eager record of differentiable ops executed while the tape is active.
///
/// An op output is tracked when the tape is active and at least one input is
/// tracked; leaves become tracked through watch(). Only one tape per thread
/// may be active at a time.
template <typename T>
class GradTape {
public:
    /// grad_in[i] is null when input i is not tracked; otherwise the op adds
    /// its contribution into it.
    using BackwardFn = std::function<void(std::span<const T> grad_out, std::span<std::vector<T>* const> grad_in)>;

    GradTape() = default;
    GradTape(const GradTape&) = delete;
    GradTape& operator=(const GradTape&) = delete;

    void watch(const Tensor<T>& leaf);
    bool tracks(const Tensor<T>& t) const { return tracked_.count(t.id()) != 0; }

    void record(std::string_view op, const Tensor<T>& output, std::vector<Tensor<T>> inputs, BackwardFn fn);

    std::size_t size() const { return entries_.size(); }

    /// Reverse sweep from a single-element loss. `visit` (optional) sees
    /// (entry index, op name) for each replayed entry in visiting order.
    GradientMap<T> backward(const Tensor<T>& loss,
                            const std::function<void(std::size_t, std::string_view)>& visit = {}) const;

    /// Tape that ops on this thread currently record into, or null.
    static GradTape* active();

    /// Activates a tape for the current thread for the scope's lifetime.
    class Scope {
    public:
        explicit Scope(GradTape& tape);
        ~Scope();
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        GradTape* previous_;
    };

private:
    struct Entry {
        std::string_view op;
        Tensor<T> output;
        std::vector<Tensor<T>> inputs;
        BackwardFn backward;
    };
    std::vector<Entry> entries_;
    std::vector<Tensor<T>> watched_;
    std::unordered_set<const void*> tracked_;
};

/// Active tape if any input is tracked by it, null otherwise.
template <typename T>
GradTape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs);

}  // namespace pft
