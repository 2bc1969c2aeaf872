#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pft/config.hpp"
#include "pft/image.hpp"
#include "pft/model.hpp"

namespace pft {

enum class Optimizer { kGradientDescent, kMomentum };

/// Toy training settings; read from the same `key = value` file as the model.
struct TrainConfig {
    std::size_t steps = 500;
    double learning_rate = 0.05;
    Optimizer optimizer = Optimizer::kMomentum;
    double momentum = 0.9;
    std::size_t batch_size = 1;
    std::size_t lr_patch = 24;  // square LR crop; clipped to the image
    std::uint64_t seed = 0;

    static TrainConfig from(KeyValueFile& kv);
    std::vector<std::string> violations() const;
    void validate() const;
    std::string to_text() const;
};

/// HR pair cropped to a multiple of `scale` plus its bicubic LR counterpart.
struct TrainingPair {
    StereoPair hr;
    StereoPair lr;
};

TrainingPair make_training_pair(const StereoPair& hr, std::size_t scale);

struct TrainResult {
    /// losses[i] is the batch L1 before update i; the last element is measured
    /// on the same batch as update steps-1, after it.
    std::vector<double> losses;
};

/// Fits `model` to `data` with L1 loss. `on_step(step, loss)` is optional.
template <typename T>
TrainResult train_toy(Model<T>& model, const std::vector<TrainingPair>& data, const TrainConfig& cfg,
                      const std::function<void(std::size_t, double)>& on_step = {});

/// `step,loss` lines, one per entry, full round-trip precision.
std::string loss_curve_csv(const std::vector<double>& losses);

}  // namespace pft
