#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pft/config.hpp"
#include "pft/grad_tape.hpp"
#include "pft/param_store.hpp"

namespace pft {

struct GradcheckOptions {
    // Five-point central difference
    // (-f(x+2h) + 8 f(x+h) - 8 f(x-h) + f(x-2h)) / 12h, truncation O(h^4).
    double step = 1e-3;
    double floor = 1e-6;               // denominator floor of the relative error
    std::size_t random_probes = 4;     // per tensor, on top of the largest-gradient entry
    std::size_t exhaustive_below = 8;  // tensors this small are probed entirely
    std::uint64_t seed = 0;
};

struct GradcheckEntry {
    std::string name;
    std::size_t probes = 0;
    double max_rel_error = 0.0;
    std::size_t worst_index = 0;
    double analytic = 0.0;  // at worst_index
    double numeric = 0.0;
};

struct GradcheckReport {
    std::vector<GradcheckEntry> entries;

    double max_rel_error() const;
    const GradcheckEntry* worst() const;
    std::string to_text() const;
};

/// Relative error |a - n| / max(|a|, |n|, floor).
double relative_error(double analytic, double numeric, double floor);

/// Compares tape gradients of `loss_fn` (which must read the tensors in
/// `params`) against central finite differences. Tensors are perturbed in
/// place and restored.
GradcheckReport check_gradients(const ParameterStore<double>& params,
                                const std::function<Tensor<double>()>& loss_fn, const GradcheckOptions& options);

enum class GradcheckInit {
    kBuild,   // fresh build weights (fusion residual scales start at zero)
    kRandom,  // every tensor perturbed so all paths carry gradient
};

struct ModelGradcheckOptions {
    std::size_t input_height = 16;
    std::size_t input_width = 16;
    GradcheckInit init = GradcheckInit::kRandom;
    std::uint64_t seed = 0;
    GradcheckOptions probe;
};

/// Full stereo model in double precision against a fixed random projection
/// of both outputs.
GradcheckReport gradcheck_model(const ModelConfig& cfg, const ModelGradcheckOptions& options);

/// Adds N(0, stddev^2) noise to every value of every tensor.
void perturb_parameters(ParameterStore<double>& params, double stddev, std::uint64_t seed);

}  // namespace pft
