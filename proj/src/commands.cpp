#include "pft/commands.hpp"

#include <zlib.h>

#include <CLI11.hpp>
#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "pft/parallel.hpp"

namespace fs = std::filesystem;

namespace pft {

namespace {

std::uint32_t file_crc32(const std::string& path) {
    const auto bytes = read_file_bytes(path);
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, bytes.data(), static_cast<uInt>(bytes.size()));
    return static_cast<std::uint32_t>(crc);
}

std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%08x", v);
    return buf;
}

std::string size_str(const Image& img) { return std::to_string(img.width) + "x" + std::to_string(img.height); }

// Inference outputs may be named sr_<view>.png; references are <view>.png.
std::optional<fs::path> find_view(const fs::path& scene, const std::string& view) {
    for (const auto& name : {view + ".png", "sr_" + view + ".png"}) {
        if (fs::is_regular_file(scene / name)) return scene / name;
    }
    return std::nullopt;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
}

StereoPair load_pair(const fs::path& scene) {
    auto l = find_view(scene, "left");
    auto r = find_view(scene, "right");
    if (!l || !r) throw Error("scene " + scene.string() + " is missing a view");
    return {load_png(l->string()), load_png(r->string())};
}

template <typename T>
void infer_with(const ModelConfig& cfg, const InferOptions& opt, const StereoPair& in) {
    const Model<T> model = Model<T>::from_store(cfg, load_weights<T>(opt.weights, cfg));
    const ViewPair<T> sr = model.forward(image_to_tensor<T>(in.left), image_to_tensor<T>(in.right));
    fs::create_directories(opt.out);
    save_png(tensor_to_image(sr.left), (fs::path(opt.out) / "sr_left.png").string());
    save_png(tensor_to_image(sr.right), (fs::path(opt.out) / "sr_right.png").string());
}

template <typename T>
TrainResult train_with(const ModelConfig& cfg, const TrainConfig& tcfg, std::uint64_t seed,
                       const std::vector<TrainingPair>& data, const fs::path& out, std::ostream& log) {
    Model<T> model = Model<T>::build(cfg, seed);
    const std::size_t every = std::max<std::size_t>(1, tcfg.steps / 10);
    auto result = train_toy(model, data, tcfg, [&](std::size_t step, double loss) {
        if (step % every == 0 || step == tcfg.steps) log << "step " << step << " loss " << loss << '\n';
    });
    save_weights(model.parameters(), (out / "weights.pftw").string());
    return result;
}

}  // namespace

std::vector<std::string> list_scenes(const std::string& dir, std::vector<std::string>* incomplete) {
    if (!fs::is_directory(dir)) throw Error("not a directory: " + dir);
    std::vector<std::string> scenes;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_directory()) continue;
        const bool complete = find_view(entry.path(), "left") && find_view(entry.path(), "right");
        if (complete) {
            scenes.push_back(entry.path().filename().string());
        } else if (incomplete) {
            incomplete->push_back(entry.path().filename().string());
        }
    }
    std::sort(scenes.begin(), scenes.end());
    if (incomplete) std::sort(incomplete->begin(), incomplete->end());
    return scenes;
}

PrepSizes prep_sizes(std::size_t h, std::size_t w, std::size_t scale, bool preshrink_2x) {
    if (preshrink_2x) {
        h /= 2;
        w /= 2;
    }
    const std::size_t lr_h = h / scale, lr_w = w / scale;
    return {lr_h * scale, lr_w * scale, lr_h, lr_w};
}

PrepSummary run_prep(const PrepOptions& opt, std::ostream& log) {
    if (opt.scale != 2 && opt.scale != 4) throw Error("prep: scale must be 2 or 4");
    const fs::path base = fs::path(opt.root) / opt.dataset;
    const fs::path hr_dir = base / "hr";
    std::vector<std::string> incomplete;
    const auto scenes = list_scenes(hr_dir.string(), &incomplete);
    if (!incomplete.empty()) {
        std::string msg = "prep: scene(s) missing a left or right view:";
        for (const auto& s : incomplete) msg += " " + s;
        throw Error(msg);
    }
    if (scenes.empty()) throw Error("prep: no scenes under " + hr_dir.string());

    const std::string tag = "x" + std::to_string(opt.scale);
    PrepSummary summary;
    summary.lr_dir = (base / ("lr_" + tag)).string();
    summary.gt_dir = (base / ("gt_" + tag)).string();
    summary.manifest = (fs::path(summary.lr_dir) / "manifest.txt").string();

    std::ostringstream manifest;
    manifest << "# scene view hr_crc32 gt_crc32 lr_crc32 gt_size lr_size\n";
    manifest << "# scale " << opt.scale << (opt.preshrink_2x ? " preshrink_2x" : "") << '\n';
    for (const auto& scene : scenes) {
        const fs::path src = hr_dir / scene;
        const StereoPair hr = load_pair(src);
        if (!hr.left.same_size(hr.right)) {
            throw Error("prep: scene " + scene + " has differently sized views (" + size_str(hr.left) + " vs " +
                        size_str(hr.right) + ")");
        }
        const PrepSizes sz = prep_sizes(hr.left.height, hr.left.width, opt.scale, opt.preshrink_2x);
        if (sz.lr_h == 0 || sz.lr_w == 0) throw Error("prep: scene " + scene + " is too small for the scale");
        fs::create_directories(fs::path(summary.lr_dir) / scene);
        fs::create_directories(fs::path(summary.gt_dir) / scene);
        for (const std::string view : {"left", "right"}) {
            Image img = view == "left" ? hr.left : hr.right;
            if (opt.preshrink_2x) img = bicubic_resize(img, img.height / 2, img.width / 2);
            const Image gt = crop(img, 0, 0, sz.gt_h, sz.gt_w);
            const Image lr = bicubic_resize(gt, sz.lr_h, sz.lr_w);
            const std::string gt_path = (fs::path(summary.gt_dir) / scene / (view + ".png")).string();
            const std::string lr_path = (fs::path(summary.lr_dir) / scene / (view + ".png")).string();
            save_png(gt, gt_path);
            save_png(lr, lr_path);
            const auto src_path = find_view(src, view);
            manifest << scene << ' ' << view << ' ' << hex32(file_crc32(src_path->string())) << ' '
                     << hex32(file_crc32(gt_path)) << ' ' << hex32(file_crc32(lr_path)) << ' ' << size_str(gt) << ' '
                     << size_str(lr) << '\n';
        }
        log << scene << ": gt " << sz.gt_w << "x" << sz.gt_h << ", lr " << sz.lr_w << "x" << sz.lr_h << '\n';
        ++summary.scenes;
    }
    write_text(summary.manifest, manifest.str());
    return summary;
}

void run_infer(const GlobalOptions& global, const InferOptions& opt) {
    ModelConfig cfg = ModelConfig::resolve(global.config.empty() ? "default" : global.config);
    if (opt.scale) cfg.scale = *opt.scale;
    cfg.validate();
    const StereoPair in{load_png(opt.left), load_png(opt.right)};
    if (!in.left.same_size(in.right)) {
        throw Error("infer: left and right images differ in size (" + size_str(in.left) + " vs " +
                    size_str(in.right) + ")");
    }
    if (global.precision == Precision::kF64) {
        infer_with<double>(cfg, opt, in);
    } else {
        infer_with<float>(cfg, opt, in);
    }
}

EvalReport run_eval(const EvalOptions& opt, std::ostream& out) {
    std::vector<std::string> sr_incomplete, gt_incomplete;
    const auto sr_scenes = list_scenes(opt.sr, &sr_incomplete);
    const auto gt_scenes = list_scenes(opt.gt, &gt_incomplete);
    std::vector<std::string> unmatched;
    for (const auto& s : gt_scenes)
        if (!std::binary_search(sr_scenes.begin(), sr_scenes.end(), s)) unmatched.push_back(s + " (no output)");
    for (const auto& s : sr_scenes)
        if (!std::binary_search(gt_scenes.begin(), gt_scenes.end(), s)) unmatched.push_back(s + " (no reference)");
    for (const auto& s : sr_incomplete) unmatched.push_back(s + " (output missing a view)");
    for (const auto& s : gt_incomplete) unmatched.push_back(s + " (reference missing a view)");
    if (!unmatched.empty()) {
        std::string msg = "eval: unmatched scene(s):";
        for (const auto& s : unmatched) msg += " " + s;
        throw Error(msg);
    }
    if (gt_scenes.empty()) throw Error("eval: no scenes under " + opt.gt);

    if (!opt.manifest.empty()) {
        std::ifstream in(opt.manifest);
        if (!in) throw Error("eval: cannot read manifest " + opt.manifest);
        std::map<std::string, std::string> expected;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ls(line);
            std::string scene, view, hr_crc, gt_crc;
            ls >> scene >> view >> hr_crc >> gt_crc;
            expected[scene + "/" + view] = gt_crc;
        }
        for (const auto& scene : gt_scenes) {
            for (const std::string view : {"left", "right"}) {
                auto it = expected.find(scene + "/" + view);
                const auto path = find_view(fs::path(opt.gt) / scene, view);
                if (it == expected.end()) throw Error("eval: manifest has no entry for " + scene + "/" + view);
                if (hex32(file_crc32(path->string())) != it->second) {
                    throw Error("eval: reference " + path->string() + " does not match the manifest checksum");
                }
            }
        }
    }

    std::vector<StereoPair> sr, gt;
    for (const auto& scene : gt_scenes) {
        sr.push_back(load_pair(fs::path(opt.sr) / scene));
        gt.push_back(load_pair(fs::path(opt.gt) / scene));
        if (!sr.back().left.same_size(gt.back().left) || !sr.back().right.same_size(gt.back().right)) {
            throw Error("eval: scene " + scene + " output size " + size_str(sr.back().left) +
                        " differs from reference " + size_str(gt.back().left));
        }
    }
    EvalRow row = evaluate_pairs(sr, gt);
    row.scale = opt.scale;
    row.dataset = opt.dataset;
    if (row.dataset.empty()) {
        fs::path g = fs::weakly_canonical(fs::path(opt.gt));
        row.dataset = g.has_parent_path() ? g.parent_path().filename().string() : g.filename().string();
    }
    EvalReport report;
    report.rows.push_back(row);
    out << report.to_table();
    const std::string csv_path = opt.out.empty() ? (fs::path(opt.sr) / "eval.csv").string() : opt.out;
    write_text(csv_path, report.to_csv());
    return report;
}

bool run_gradcheck(const GlobalOptions& global, const GradcheckCommandOptions& opt, std::ostream& out) {
    const ModelConfig cfg = ModelConfig::resolve(global.config.empty() ? "toy" : global.config);
    std::size_t count = 0;
    for (const auto& p : parameter_layout(cfg)) count += shape_numel(p.shape);
    if (count > opt.max_parameters) {
        throw Error("gradcheck: config has " + std::to_string(count) + " parameters, limit is " +
                    std::to_string(opt.max_parameters) + "; use a smaller config");
    }
    ModelGradcheckOptions mo;
    mo.input_height = mo.input_width = opt.input_size;
    mo.init = opt.init;
    mo.seed = global.seed;
    mo.probe.seed = global.seed;
    const GradcheckReport report = gradcheck_model(cfg, mo);
    out << report.to_text();
    const GradcheckEntry* worst = report.worst();
    const bool ok = report.max_rel_error() <= opt.tolerance;
    char line[256];
    std::snprintf(line, sizeof(line), "%zu groups, %zu parameters, max relative error %.3e (tolerance %.1e): %s\n",
                  report.entries.size(), count, report.max_rel_error(), opt.tolerance, ok ? "PASS" : "FAIL");
    out << line;
    if (!ok && worst) out << "worst group: " << worst->name << '\n';
    return ok;
}

TrainResult run_train_toy(const GlobalOptions& global, const TrainToyOptions& opt, std::ostream& log) {
    ModelConfig cfg;
    TrainConfig tcfg;
    tcfg.seed = global.seed;
    const std::string source = global.config.empty() ? "toy" : global.config;
    if (source == "toy" || source == "default") {
        cfg = ModelConfig::resolve(source);
    } else {
        KeyValueFile kv = KeyValueFile::load(source);
        cfg = ModelConfig::from(kv);
        const bool has_seed = kv.has("train_seed");
        tcfg = TrainConfig::from(kv);
        if (!has_seed) tcfg.seed = global.seed;
        kv.reject_unused();
    }

    const fs::path hr_dir = fs::path(opt.data) / "hr";
    const auto scenes = fs::is_directory(hr_dir) ? list_scenes(hr_dir.string()) : std::vector<std::string>{};
    if (scenes.empty()) throw Error("train-toy: empty dataset, no stereo pairs under " + hr_dir.string());
    std::vector<TrainingPair> data;
    for (const auto& scene : scenes) {
        const StereoPair hr = load_pair(hr_dir / scene);
        if (!hr.left.same_size(hr.right)) throw Error("train-toy: scene " + scene + " has differently sized views");
        data.push_back(make_training_pair(hr, cfg.scale));
    }

    const fs::path out(opt.out);
    fs::create_directories(out);
    TrainResult result = global.precision == Precision::kF64
                             ? train_with<double>(cfg, tcfg, global.seed, data, out, log)
                             : train_with<float>(cfg, tcfg, global.seed, data, out, log);
    write_text(out / "loss.csv", loss_curve_csv(result.losses));
    write_text(out / "model.cfg", cfg.to_text());
    write_text(out / "train.cfg", tcfg.to_text());
    return result;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"Stereo image super-resolution with parallax fusion transformers"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalOptions global;
    std::string precision = "f32";
    app.add_option("--seed", global.seed, "Seed for initialization and sampling")->capture_default_str();
    app.add_option("--precision", precision, "Arithmetic precision")
        ->check(CLI::IsMember({"f32", "f64"}))
        ->capture_default_str();
    app.add_option("--config", global.config, "Preset (default, toy) or key = value config file");
    app.add_option("--threads", global.threads, "Worker threads (0 = runtime default)");

    PrepOptions prep;
    auto* prep_cmd = app.add_subcommand("prep", "Generate bicubic LR inputs and aligned references");
    prep_cmd->add_option("--root", prep.root, "Data root")->required();
    prep_cmd->add_option("--dataset", prep.dataset, "Dataset name under the root")->required();
    prep_cmd->add_option("--scale", prep.scale, "Downscaling factor")->check(CLI::IsMember({2, 4}))->required();
    prep_cmd->add_flag("--preshrink-2x", prep.preshrink_2x, "Halve the references first (Middlebury)");

    InferOptions infer;
    std::size_t infer_scale = 0;
    auto* infer_cmd = app.add_subcommand("infer", "Super-resolve one stereo pair");
    infer_cmd->add_option("--weights", infer.weights, "Weight file")->required();
    infer_cmd->add_option("--left", infer.left, "Left LR image")->required();
    infer_cmd->add_option("--right", infer.right, "Right LR image")->required();
    infer_cmd->add_option("--out", infer.out, "Output directory")->required();
    infer_cmd->add_option("--scale", infer_scale, "Upscaling factor (overrides the config)")
        ->check(CLI::IsMember({2, 4}));

    EvalOptions eval;
    auto* eval_cmd = app.add_subcommand("eval", "PSNR/SSIM of outputs against references");
    eval_cmd->add_option("--sr", eval.sr, "Output tree (<scene>/sr_left.png ...)")->required();
    eval_cmd->add_option("--gt", eval.gt, "Reference tree (<scene>/left.png ...)")->required();
    eval_cmd->add_option("--out", eval.out, "CSV report path (default <sr>/eval.csv)");
    eval_cmd->add_option("--manifest", eval.manifest, "Prep manifest to verify the references");
    eval_cmd->add_option("--dataset", eval.dataset, "Dataset label for the report");
    eval_cmd->add_option("--scale", eval.scale, "Scale label for the report");

    GradcheckCommandOptions gc;
    std::string gc_init = "build";
    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every parameter group (64-bit)");
    gc_cmd->add_option("--input-size", gc.input_size, "Square LR input size")->capture_default_str();
    gc_cmd->add_option("--init", gc_init, "Weights to check at")
        ->check(CLI::IsMember({"build", "random"}))
        ->capture_default_str();
    gc_cmd->add_option("--tolerance", gc.tolerance, "Maximum relative error")->capture_default_str();

    TrainToyOptions train;
    auto* train_cmd = app.add_subcommand("train-toy", "Overfit a small model with L1 loss");
    train_cmd->add_option("--data", train.data, "Dataset directory containing hr/")->required();
    train_cmd->add_option("--out", train.out, "Output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        global.precision = precision == "f64" ? Precision::kF64 : Precision::kF32;
        if (global.threads > 0) set_num_threads(global.threads);
        if (*prep_cmd) {
            const auto s = run_prep(prep, std::cout);
            std::cout << "wrote " << s.scenes << " scene(s) to " << s.lr_dir << " and " << s.gt_dir << '\n';
        } else if (*infer_cmd) {
            if (infer_scale != 0) infer.scale = infer_scale;
            run_infer(global, infer);
        } else if (*eval_cmd) {
            run_eval(eval, std::cout);
        } else if (*gc_cmd) {
            gc.init = gc_init == "random" ? GradcheckInit::kRandom : GradcheckInit::kBuild;
            if (!run_gradcheck(global, gc, std::cout)) {
                std::cerr << "error: gradient check failed\n";
                return 1;
            }
        } else if (*train_cmd) {
            const auto r = run_train_toy(global, train, std::cout);
            std::cout << "initial loss " << r.losses.front() << ", final loss " << r.losses.back() << '\n';
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}

}  // namespace pft
