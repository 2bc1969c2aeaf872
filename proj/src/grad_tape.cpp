#include "pft/grad_tape.hpp"

#include <algorithm>

namespace pft {

template <typename T>
Tensor<T> GradientMap<T>::at(const Tensor<T>& watched) const {
    auto it = grads_.find(watched.id());
    if (it == grads_.end()) throw Error("gradient requested for a tensor the tape did not watch");
    return it->second;
}

namespace {
template <typename T>
thread_local GradTape<T>* g_active = nullptr;
}

template <typename T>
GradTape<T>* GradTape<T>::active() {
    return g_active<T>;
}

template <typename T>
GradTape<T>::Scope::Scope(GradTape& tape) : previous_(g_active<T>) {
    g_active<T> = &tape;
}

template <typename T>
GradTape<T>::Scope::~Scope() {
    g_active<T> = previous_;
}

template <typename T>
void GradTape<T>::watch(const Tensor<T>& leaf) {
    if (tracked_.insert(leaf.id()).second) watched_.push_back(leaf);
}

template <typename T>
void GradTape<T>::record(std::string_view op, const Tensor<T>& output, std::vector<Tensor<T>> inputs,
                         BackwardFn fn) {
    tracked_.insert(output.id());
    entries_.push_back(Entry{op, output, std::move(inputs), std::move(fn)});
}

template <typename T>
GradientMap<T> GradTape<T>::backward(const Tensor<T>& loss,
                                     const std::function<void(std::size_t, std::string_view)>& visit) const {
    if (loss.numel() != 1) {
        throw ShapeError("backward: loss must be a single element, got shape " + shape_str(loss.shape()));
    }
    std::unordered_map<const void*, std::vector<T>> grads;
    if (tracks(loss)) grads[loss.id()] = std::vector<T>{T(1)};

    for (std::size_t i = entries_.size(); i-- > 0;) {
        const Entry& e = entries_[i];
        auto out = grads.find(e.output.id());
        if (out == grads.end()) continue;
        if (visit) visit(i, e.op);

        std::vector<std::vector<T>*> sinks(e.inputs.size(), nullptr);
        for (std::size_t k = 0; k < e.inputs.size(); ++k) {
            const Tensor<T>& in = e.inputs[k];
            if (!tracks(in)) continue;
            auto& g = grads[in.id()];
            if (g.empty()) g.assign(in.numel(), T(0));
            sinks[k] = &g;
        }
        // Re-lookup: inserting input buffers may have rehashed the map.
        const std::vector<T>& grad_out = grads.find(e.output.id())->second;
        e.backward(grad_out, sinks);
        grads.erase(e.output.id());
    }

    GradientMap<T> result;
    for (const Tensor<T>& leaf : watched_) {
        auto it = grads.find(leaf.id());
        if (it == grads.end()) {
            result.grads_.emplace(leaf.id(), Tensor<T>(leaf.shape()));
        } else {
            result.grads_.emplace(leaf.id(), Tensor<T>(leaf.shape(), std::move(it->second)));
        }
    }
    return result;
}

template <typename T>
GradTape<T>* recording_tape(std::initializer_list<const Tensor<T>*> inputs) {
    GradTape<T>* tape = GradTape<T>::active();
    if (!tape) return nullptr;
    for (const Tensor<T>* t : inputs) {
        if (t && t->defined() && tape->tracks(*t)) return tape;
    }
    return nullptr;
}

template class GradientMap<float>;
template class GradientMap<double>;
template class GradTape<float>;
template class GradTape<double>;
template GradTape<float>* recording_tape(std::initializer_list<const Tensor<float>*>);
template GradTape<double>* recording_tape(std::initializer_list<const Tensor<double>*>);

}  // namespace pft
