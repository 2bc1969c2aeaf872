#include "pft/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "pft/model.hpp"

namespace pft {

double relative_error(double analytic, double numeric, double floor) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
    return std::abs(analytic - numeric) / denom;
}

double GradcheckReport::max_rel_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
}

const GradcheckEntry* GradcheckReport::worst() const {
    const GradcheckEntry* w = nullptr;
    for (const auto& e : entries)
        if (!w || e.max_rel_error > w->max_rel_error) w = &e;
    return w;
}

std::string GradcheckReport::to_text() const {
    std::ostringstream os;
    char line[512];
    for (const auto& e : entries) {
        std::snprintf(line, sizeof(line), "%-56s probes=%-3zu max_rel=%.3e  (idx %zu: analytic %.6e numeric %.6e)\n",
                      e.name.c_str(), e.probes, e.max_rel_error, e.worst_index, e.analytic, e.numeric);
        os << line;
    }
    return os.str();
}

namespace {

std::vector<std::size_t> probe_indices(std::span<const double> grad, const GradcheckOptions& opt,
                                       std::mt19937_64& rng) {
    const std::size_t n = grad.size();
    std::vector<std::size_t> idx;
    if (n <= opt.exhaustive_below) {
        for (std::size_t i = 0; i < n; ++i) idx.push_back(i);
        return idx;
    }
    std::size_t argmax = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs(grad[i]) > std::abs(grad[argmax])) argmax = i;
    idx.push_back(argmax);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::size_t k = 0; k < opt.random_probes; ++k) {
        const std::size_t i = pick(rng);
        if (std::find(idx.begin(), idx.end(), i) == idx.end()) idx.push_back(i);
    }
    return idx;
}

}  // namespace

GradcheckReport check_gradients(const ParameterStore<double>& params,
                                const std::function<Tensor<double>()>& loss_fn, const GradcheckOptions& options) {
    GradTape<double> tape;
    GradientMap<double> grads;
    {
        GradTape<double>::Scope scope(tape);
        for (const auto& e : params.entries()) tape.watch(e.tensor);
        Tensor<double> loss = loss_fn();
        grads = tape.backward(loss);
    }

    std::mt19937_64 rng(options.seed);
    GradcheckReport report;
    for (const auto& e : params.entries()) {
        Tensor<double> param = e.tensor;
        const Tensor<double> g = grads.at(param);
        const auto gv = g.values();
        GradcheckEntry entry;
        entry.name = e.name;
        for (std::size_t i : probe_indices(gv, options, rng)) {
            auto v = param.mutable_values();
            const double original = v[i];
            const double h = options.step;
            auto at = [&](double offset) {
                v[i] = original + offset;
                return loss_fn().item();
            };
            const double numeric = (8.0 * (at(h) - at(-h)) - (at(2.0 * h) - at(-2.0 * h))) / (12.0 * h);
            v[i] = original;
            const double err = relative_error(gv[i], numeric, options.floor);
            if (entry.probes == 0 || err > entry.max_rel_error) {
                entry.max_rel_error = err;
                entry.worst_index = i;
                entry.analytic = gv[i];
                entry.numeric = numeric;
            }
            ++entry.probes;
        }
        report.entries.push_back(std::move(entry));
    }
    return report;
}

void perturb_parameters(ParameterStore<double>& params, double stddev, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, stddev);
    for (auto& e : params.entries())
        for (double& v : e.tensor.mutable_values()) v += normal(rng);
}

GradcheckReport gradcheck_model(const ModelConfig& cfg, const ModelGradcheckOptions& options) {
    Model<double> model = Model<double>::build(cfg, options.seed);
    if (options.init == GradcheckInit::kRandom) perturb_parameters(model.parameters(), 0.1, options.seed + 1);

    std::mt19937_64 rng(options.seed + 2);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto random_tensor = [&](Shape shape, bool gaussian) {
        Tensor<double> t(std::move(shape));
        for (double& v : t.mutable_values()) v = gaussian ? normal(rng) : unit(rng);
        return t;
    };
    const Shape in{1, 3, options.input_height, options.input_width};
    const Shape out{1, 3, options.input_height * cfg.scale, options.input_width * cfg.scale};
    const auto left = random_tensor(in, false);
    const auto right = random_tensor(in, false);
    const auto proj_left = random_tensor(out, true);
    const auto proj_right = random_tensor(out, true);
    const double norm = 1.0 / std::sqrt(static_cast<double>(2 * shape_numel(out)));

    auto loss_fn = [&]() {
        const auto sr = model.forward(left, right);
        auto total = ops::add(ops::sum(ops::mul(sr.left, proj_left)), ops::sum(ops::mul(sr.right, proj_right)));
        return ops::scale(total, norm);
    };
    return check_gradients(model.parameters(), loss_fn, options.probe);
}

}  // namespace pft
