#include "pft/train.hpp"

#include <cstdio>
#include <random>
#include <sstream>

#include "pft/grad_tape.hpp"
#include "pft/metrics.hpp"

namespace pft {

TrainConfig TrainConfig::from(KeyValueFile& kv) {
    TrainConfig c;
    if (auto v = kv.take_size("steps")) c.steps = *v;
    if (auto v = kv.take_double("learning_rate")) c.learning_rate = *v;
    if (auto v = kv.take("optimizer")) {
        if (*v == "sgd") {
            c.optimizer = Optimizer::kGradientDescent;
        } else if (*v == "momentum") {
            c.optimizer = Optimizer::kMomentum;
        } else {
            throw ConfigError("config key `optimizer`: expected sgd or momentum, got `" + *v + "`");
        }
    }
    if (auto v = kv.take_double("momentum")) c.momentum = *v;
    if (auto v = kv.take_size("batch_size")) c.batch_size = *v;
    if (auto v = kv.take_size("lr_patch")) c.lr_patch = *v;
    if (auto v = kv.take_size("train_seed")) c.seed = *v;
    c.validate();
    return c;
}

std::vector<std::string> TrainConfig::violations() const {
    std::vector<std::string> v;
    if (steps == 0) v.push_back("steps must be >= 1");
    if (!(learning_rate > 0.0)) v.push_back("learning_rate must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) v.push_back("momentum must be in [0, 1)");
    if (batch_size == 0) v.push_back("batch_size must be >= 1");
    if (lr_patch == 0) v.push_back("lr_patch must be >= 1");
    return v;
}

void TrainConfig::validate() const {
    auto v = violations();
    if (v.empty()) return;
    std::string msg = "invalid training config:";
    for (std::size_t i = 0; i < v.size(); ++i) msg += (i ? "; " : " ") + v[i];
    throw ConfigError(msg);
}

std::string TrainConfig::to_text() const {
    std::ostringstream os;
    os.precision(17);
    os << "steps = " << steps << '\n'
       << "learning_rate = " << learning_rate << '\n'
       << "optimizer = " << (optimizer == Optimizer::kMomentum ? "momentum" : "sgd") << '\n'
       << "momentum = " << momentum << '\n'
       << "batch_size = " << batch_size << '\n'
       << "lr_patch = " << lr_patch << '\n'
       << "train_seed = " << seed << '\n';
    return os.str();
}

TrainingPair make_training_pair(const StereoPair& hr, std::size_t scale) {
    if (!hr.left.same_size(hr.right)) throw ImageError("training pair: left and right views differ in size");
    const std::size_t h = hr.left.height / scale, w = hr.left.width / scale;
    if (h == 0 || w == 0) throw ImageError("training pair: image smaller than the scale factor");
    TrainingPair p;
    p.hr.left = crop(hr.left, 0, 0, h * scale, w * scale);
    p.hr.right = crop(hr.right, 0, 0, h * scale, w * scale);
    p.lr.left = bicubic_resize(p.hr.left, h, w);
    p.lr.right = bicubic_resize(p.hr.right, h, w);
    return p;
}

template <typename T>
TrainResult train_toy(Model<T>& model, const std::vector<TrainingPair>& data, const TrainConfig& cfg,
                      const std::function<void(std::size_t, double)>& on_step) {
    cfg.validate();
    if (data.empty()) throw Error("train-toy: empty dataset");
    const std::size_t scale = model.config().scale;
    std::size_t ph = cfg.lr_patch, pw = cfg.lr_patch;
    for (const auto& d : data) {
        ph = std::min(ph, d.lr.left.height);
        pw = std::min(pw, d.lr.left.width);
    }

    std::mt19937_64 rng(cfg.seed);
    auto sample_batch = [&]() {
        std::vector<PatchPair> batch;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const auto& d = data[std::uniform_int_distribution<std::size_t>(0, data.size() - 1)(rng)];
            const std::size_t y = std::uniform_int_distribution<std::size_t>(0, d.lr.left.height - ph)(rng);
            const std::size_t x = std::uniform_int_distribution<std::size_t>(0, d.lr.left.width - pw)(rng);
            batch.push_back(extract_patch_pair(d.lr, d.hr, ph, pw, scale, y, x));
        }
        return batch;
    };
    auto stack = [](const std::vector<PatchPair>& batch, bool hr, bool left) {
        std::vector<const Image*> ims;
        for (const auto& p : batch) {
            const StereoPair& s = hr ? p.hr : p.lr;
            ims.push_back(left ? &s.left : &s.right);
        }
        return images_to_tensor<T>(ims);
    };

    auto entries = model.parameters().entries();
    std::vector<std::vector<T>> velocity(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) velocity[i].assign(entries[i].tensor.numel(), T(0));
    const T lr = static_cast<T>(cfg.learning_rate);
    const T mu = static_cast<T>(cfg.optimizer == Optimizer::kMomentum ? cfg.momentum : 0.0);

    TrainResult result;
    std::vector<PatchPair> batch;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        batch = sample_batch();
        const ViewPair<T> input{stack(batch, false, true), stack(batch, false, false)};
        const ViewPair<T> target{stack(batch, true, true), stack(batch, true, false)};
        GradTape<T> tape;
        GradientMap<T> grads;
        double loss_value;
        {
            typename GradTape<T>::Scope scope(tape);
            for (const auto& e : entries) tape.watch(e.tensor);
            Tensor<T> loss = l1_loss(model.forward(input.left, input.right), target);
            loss_value = static_cast<double>(loss.item());
            grads = tape.backward(loss);
        }
        result.losses.push_back(loss_value);
        if (on_step) on_step(step, loss_value);

        for (std::size_t i = 0; i < entries.size(); ++i) {
            Tensor<T> param = entries[i].tensor;
            const Tensor<T> g = grads.at(param);
            auto p = param.mutable_values();
            auto gv = g.values();
            auto& v = velocity[i];
            for (std::size_t k = 0; k < p.size(); ++k) {
                v[k] = mu * v[k] + gv[k];
                p[k] -= lr * v[k];
            }
        }
        if (step + 1 == cfg.steps) {
            const Tensor<T> loss = l1_loss(model.forward(input.left, input.right), target);
            result.losses.push_back(static_cast<double>(loss.item()));
            if (on_step) on_step(cfg.steps, result.losses.back());
        }
    }
    return result;
}

std::string loss_curve_csv(const std::vector<double>& losses) {
    std::string out = "step,loss\n";
    char line[64];
    for (std::size_t i = 0; i < losses.size(); ++i) {
        std::snprintf(line, sizeof(line), "%zu,%.17g\n", i, losses[i]);
        out += line;
    }
    return out;
}

template TrainResult train_toy(Model<float>&, const std::vector<TrainingPair>&, const TrainConfig&,
                               const std::function<void(std::size_t, double)>&);
template TrainResult train_toy(Model<double>&, const std::vector<TrainingPair>&, const TrainConfig&,
                               const std::function<void(std::size_t, double)>&);

}  // namespace pft
