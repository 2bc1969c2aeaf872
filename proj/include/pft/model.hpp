#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pft/backbone.hpp"
#include "pft/config.hpp"
#include "pft/fusion.hpp"
#include "pft/param_store.hpp"

namespace pft {

enum class InitKind {
    kWeight,  // truncated normal, std 0.02, cut at two standard deviations
    kZero,
    kOne,
};

struct ParameterSpec {
    std::string name;
    Shape shape;
    InitKind init;
};

/// Every learnable tensor of the network for `cfg`, in serialization order.
std::vector<ParameterSpec> parameter_layout(const ModelConfig& cfg);

template <typename T>
struct ModelParams {
    Conv2dParams<T> shallow;
    std::vector<RstbParams<T>> deep;
    PftParams<T> fusion;
    RefineParams<T> refine;
    Conv2dParams<T> reconstruct;  // embed_dim -> 3 * scale^2
};

/// Stereo super-resolution network:
/// shallow conv -> RSTBs -> PFT fusion -> RSTBs + conv (+ shallow residual)
/// -> conv + pixel shuffle, with one weight set shared by both views.
///
/// Copies share parameter storage.
template <typename T>
class Model {
public:
    /// Fresh weights, deterministic in `seed`.
    static Model build(const ModelConfig& cfg, std::uint64_t seed);

    /// Binds an existing store; names and shapes must match the layout of
    /// `cfg` exactly.
    static Model from_store(const ModelConfig& cfg, ParameterStore<T> store);

    const ModelConfig& config() const { return cfg_; }
    const ParameterStore<T>& parameters() const { return store_; }
    ParameterStore<T>& parameters() { return store_; }
    const ModelParams<T>& params() const { return params_; }

    /// [B,3,H,W] stereo inputs -> [B,3,S*H,S*W] outputs.
    ViewPair<T> forward(const Tensor<T>& left, const Tensor<T>& right) const;

private:
    ModelConfig cfg_;
    ParameterStore<T> store_;
    ModelParams<T> params_;
};

/// Reads a weight file and checks it against the layout of `cfg`.
template <typename T>
ParameterStore<T> load_weights(const std::string& path, const ModelConfig& cfg);

/// Checks names, order and shapes of `store` against `cfg`; throws
/// FormatError naming the first offending entry.
template <typename T>
void check_layout(const ParameterStore<T>& store, const ModelConfig& cfg);

}  // namespace pft
