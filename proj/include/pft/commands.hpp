#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "pft/gradcheck.hpp"
#include "pft/metrics.hpp"
#include "pft/train.hpp"

namespace pft {

enum class Precision { kF32, kF64 };

struct GlobalOptions {
    std::uint64_t seed = 0;
    Precision precision = Precision::kF32;
    std::string config;       // preset name or file; empty means the command's default
    std::size_t threads = 0;  // 0 keeps the runtime default
};

struct PrepOptions {
    std::string root;
    std::string dataset;
    std::size_t scale = 4;
    bool preshrink_2x = false;
};

struct PrepSummary {
    std::size_t scenes = 0;
    std::string lr_dir;
    std::string gt_dir;
    std::string manifest;
};

/// Reads <root>/<dataset>/hr/<scene>/{left,right}.png and writes the
/// degraded inputs to lr_x<S>/, the aligned references to gt_x<S>/ and a
/// checksum manifest to lr_x<S>/manifest.txt.
PrepSummary run_prep(const PrepOptions& opt, std::ostream& log);

/// Ground-truth size after optional halving and cropping to a multiple of
/// the scale; the LR size is this divided by the scale.
struct PrepSizes {
    std::size_t gt_h, gt_w, lr_h, lr_w;
};
PrepSizes prep_sizes(std::size_t h, std::size_t w, std::size_t scale, bool preshrink_2x);

struct InferOptions {
    std::string weights;
    std::string left;
    std::string right;
    std::string out;
    std::optional<std::size_t> scale;  // overrides the config scale
};

/// Writes <out>/sr_left.png and <out>/sr_right.png.
void run_infer(const GlobalOptions& global, const InferOptions& opt);

struct EvalOptions {
    std::string sr;
    std::string gt;
    std::string out;       // CSV path; empty means <sr>/eval.csv
    std::string manifest;  // optional prep manifest to verify the references against
    std::string dataset;   // defaults to the parent directory name of gt
    std::size_t scale = 0;
};

EvalReport run_eval(const EvalOptions& opt, std::ostream& out);

struct GradcheckCommandOptions {
    std::size_t input_size = 16;
    GradcheckInit init = GradcheckInit::kBuild;
    double tolerance = 1e-4;
    std::size_t max_parameters = 50000;
};

/// Returns true when every parameter group is within tolerance.
bool run_gradcheck(const GlobalOptions& global, const GradcheckCommandOptions& opt, std::ostream& out);

struct TrainToyOptions {
    std::string data;  // dataset directory containing hr/
    std::string out;
};

/// Trains on every HR pair under <data>/hr and writes loss.csv,
/// weights.pftw and model.cfg into <out>.
TrainResult run_train_toy(const GlobalOptions& global, const TrainToyOptions& opt, std::ostream& log);

/// Scene directories (sorted) that hold both left.png and right.png.
std::vector<std::string> list_scenes(const std::string& dir, std::vector<std::string>* incomplete = nullptr);

/// Command-line entry point; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace pft
