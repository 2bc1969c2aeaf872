#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "pft/commands.hpp"
#include "pft/parallel.hpp"
#include "support.hpp"

namespace pft {
namespace {

namespace fs = std::filesystem;

void write_scene(const fs::path& dir, const StereoPair& pair) {
    fs::create_directories(dir);
    save_png(pair.left, (dir / "left.png").string());
    save_png(pair.right, (dir / "right.png").string());
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

int cli(std::vector<std::string> args) {
    args.insert(args.begin(), "pftssr");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return run_cli(static_cast<int>(argv.size()), argv.data());
}

fs::path tiny_config(const fs::path& dir, const std::string& extra = "") {
    const auto p = dir / "tiny.cfg";
    std::ofstream(p) << "preset = toy\nembed_dim = 4\nwindow = 2\nheads = 1\n" << extra;
    return p;
}

TEST(PrepSizes, FloorAndAlignment) {
    auto s = prep_sizes(128, 128, 4, false);
    EXPECT_EQ(s.lr_h, 32u);
    EXPECT_EQ(s.gt_w, 128u);
    auto m = prep_sizes(1988, 2880, 4, true);
    EXPECT_EQ(m.lr_h, 248u);
    EXPECT_EQ(m.lr_w, 360u);
    EXPECT_EQ(m.gt_h, 992u);  // 994 cropped to a multiple of 4
    EXPECT_EQ(m.gt_w, 1440u);
    auto odd = prep_sizes(31, 45, 2, false);
    EXPECT_EQ(odd.gt_h, 30u);
    EXPECT_EQ(odd.lr_w, 22u);
}

TEST(Prep, WritesAlignedTreesAndIsIdempotent) {
    auto root = testing::fresh_dir("prep");
    write_scene(root / "kitti" / "hr" / "s1", testing::synthetic_pair(40, 36));
    write_scene(root / "kitti" / "hr" / "s0", testing::synthetic_pair(42, 44));
    std::ostringstream log;
    auto summary = run_prep({root.string(), "kitti", 4, false}, log);
    EXPECT_EQ(summary.scenes, 2u);
    Image lr = load_png((root / "kitti" / "lr_x4" / "s1" / "left.png").string());
    Image gt = load_png((root / "kitti" / "gt_x4" / "s1" / "right.png").string());
    EXPECT_EQ(lr.height, 10u);
    EXPECT_EQ(lr.width, 9u);
    EXPECT_EQ(gt.height, 40u);
    EXPECT_EQ(gt.width, 36u);
    EXPECT_EQ(load_png((root / "kitti" / "gt_x4" / "s0" / "left.png").string()).width, 44u);

    const std::string manifest = slurp(summary.manifest);
    EXPECT_NE(manifest.find("s0 left "), std::string::npos);
    EXPECT_NE(manifest.find("s1 right "), std::string::npos);

    const auto first_lr = slurp(root / "kitti" / "lr_x4" / "s0" / "right.png");
    run_prep({root.string(), "kitti", 4, false}, log);
    EXPECT_EQ(slurp(root / "kitti" / "lr_x4" / "s0" / "right.png"), first_lr);
    EXPECT_EQ(slurp(summary.manifest), manifest);
}

TEST(Prep, PreshrinkHalvesFirst) {
    auto root = testing::fresh_dir("prep_half");
    write_scene(root / "mb" / "hr" / "a", testing::synthetic_pair(36, 50));
    run_prep({root.string(), "mb", 2, true}, std::cout);
    Image gt = load_png((root / "mb" / "gt_x2" / "a" / "left.png").string());
    Image lr = load_png((root / "mb" / "lr_x2" / "a" / "left.png").string());
    EXPECT_EQ(gt.height, 18u);
    EXPECT_EQ(gt.width, 24u);
    EXPECT_EQ(lr.height, 9u);
    EXPECT_EQ(lr.width, 12u);
}

TEST(Prep, Errors) {
    auto root = testing::fresh_dir("prep_err");
    write_scene(root / "d" / "hr" / "good", testing::synthetic_pair(16, 16));
    fs::create_directories(root / "d" / "hr" / "lonely");
    save_png(testing::synthetic_view(16, 16, 0), (root / "d" / "hr" / "lonely" / "left.png").string());
    try {
        run_prep({root.string(), "d", 2, false}, std::cout);
        FAIL() << "expected missing view error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("lonely"), std::string::npos) << e.what();
    }
    fs::remove_all(root / "d" / "hr" / "lonely");
    write_scene(root / "d" / "hr" / "skew", {testing::synthetic_view(16, 16, 0), testing::synthetic_view(16, 18, 0)});
    EXPECT_THROW(run_prep({root.string(), "d", 2, false}, std::cout), Error);
    EXPECT_THROW(run_prep({root.string(), "nothing", 2, false}, std::cout), Error);
}

class InferTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir = testing::fresh_dir("infer");
        weights = (dir / "toy.pftw").string();
        save_weights(Model<float>::build(ModelConfig::toy(), 1).parameters(), weights);
        auto pair = testing::synthetic_pair(16, 24);
        save_png(pair.left, (dir / "l.png").string());
        save_png(pair.right, (dir / "r.png").string());
        global.config = "toy";
    }
    InferOptions options(const std::string& out) {
        return {weights, (dir / "l.png").string(), (dir / "r.png").string(), (dir / out).string(), std::nullopt};
    }
    fs::path dir;
    std::string weights;
    GlobalOptions global;
};

TEST_F(InferTest, WritesScaledOutputsDeterministically) {
    const std::size_t before = num_threads();
    set_num_threads(3);
    run_infer(global, options("a"));
    Image left = load_png((dir / "a" / "sr_left.png").string());
    EXPECT_EQ(left.height, 32u);
    EXPECT_EQ(left.width, 48u);
    EXPECT_TRUE(fs::exists(dir / "a" / "sr_right.png"));

    set_num_threads(1);
    run_infer(global, options("b"));
    set_num_threads(before);
    EXPECT_EQ(slurp(dir / "a" / "sr_left.png"), slurp(dir / "b" / "sr_left.png"));
    EXPECT_EQ(slurp(dir / "a" / "sr_right.png"), slurp(dir / "b" / "sr_right.png"));

    global.precision = Precision::kF64;
    run_infer(global, options("c"));
    EXPECT_EQ(load_png((dir / "c" / "sr_right.png").string()).width, 48u);
}

TEST_F(InferTest, Errors) {
    save_png(testing::synthetic_view(16, 20, 0), (dir / "narrow.png").string());
    auto opt = options("x");
    opt.right = (dir / "narrow.png").string();
    EXPECT_THROW(run_infer(global, opt), Error);
    opt = options("x");
    opt.scale = 4;  // weights were written for x2
    EXPECT_THROW(run_infer(global, opt), FormatError);
    opt = options("x");
    opt.weights = (dir / "l.png").string();
    EXPECT_THROW(run_infer(global, opt), FormatError);
}

TEST(Eval, PerfectOutputsAndReportFile) {
    auto dir = testing::fresh_dir("eval");
    for (std::string s : {"a", "b"}) {
        auto pair = testing::synthetic_pair(16, 20);
        write_scene(dir / "gt" / s, pair);
        fs::create_directories(dir / "sr" / s);
        save_png(pair.left, (dir / "sr" / s / "sr_left.png").string());
        save_png(pair.right, (dir / "sr" / s / "sr_right.png").string());
    }
    std::ostringstream out;
    auto report = run_eval({(dir / "sr").string(), (dir / "gt").string(), "", "", "demo", 2}, out);
    ASSERT_EQ(report.rows.size(), 1u);
    EXPECT_EQ(report.rows[0].ssim_left, 1.0);
    EXPECT_EQ(report.rows[0].ssim_avg, 1.0);
    EXPECT_EQ(report.rows[0].images, 2u);
    const auto csv = slurp(dir / "sr" / "eval.csv");
    EXPECT_EQ(csv.rfind(kEvalCsvHeader, 0), 0u);
    EXPECT_NE(out.str().find("demo"), std::string::npos);

    fs::remove_all(dir / "sr" / "b");
    try {
        run_eval({(dir / "sr").string(), (dir / "gt").string(), "", "", "demo", 2}, out);
        FAIL() << "expected unmatched scene error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("b (no output)"), std::string::npos) << e.what();
    }
}

TEST(Eval, ManifestVerifiesReferences) {
    auto root = testing::fresh_dir("eval_manifest");
    write_scene(root / "d" / "hr" / "s", testing::synthetic_pair(24, 24));
    auto summary = run_prep({root.string(), "d", 2, false}, std::cout);
    const fs::path sr = root / "sr";
    fs::create_directories(sr / "s");
    fs::copy_file(fs::path(summary.gt_dir) / "s" / "left.png", sr / "s" / "sr_left.png");
    fs::copy_file(fs::path(summary.gt_dir) / "s" / "right.png", sr / "s" / "sr_right.png");
    std::ostringstream out;
    EXPECT_NO_THROW(run_eval({sr.string(), summary.gt_dir, "", summary.manifest, "", 2}, out));
    save_png(testing::synthetic_view(24, 24, 5), (fs::path(summary.gt_dir) / "s" / "left.png").string());
    EXPECT_THROW(run_eval({sr.string(), summary.gt_dir, "", summary.manifest, "", 2}, out), Error);
}

TEST(GradcheckCommand, PassesOnTinyConfigAndChecksBudget) {
    auto dir = testing::fresh_dir("gc_cmd");
    GlobalOptions g;
    g.config = tiny_config(dir).string();
    GradcheckCommandOptions opt;
    opt.input_size = 4;
    std::ostringstream out;
    EXPECT_TRUE(run_gradcheck(g, opt, out));
    EXPECT_NE(out.str().find("PASS"), std::string::npos);
    EXPECT_NE(out.str().find("reconstruct.weight"), std::string::npos);
    opt.max_parameters = 100;
    EXPECT_THROW(run_gradcheck(g, opt, out), Error);
}

TEST(TrainToyCommand, WritesArtifactsRepeatably) {
    auto dir = testing::fresh_dir("train_cmd");
    write_scene(dir / "data" / "hr" / "p", testing::synthetic_pair(16, 16));
    GlobalOptions g;
    g.config = tiny_config(dir, "steps = 4\nlr_patch = 8\n").string();
    g.seed = 3;
    std::ostringstream log;
    auto r = run_train_toy(g, {(dir / "data").string(), (dir / "a").string()}, log);
    EXPECT_EQ(r.losses.size(), 5u);
    for (const char* f : {"loss.csv", "weights.pftw", "model.cfg", "train.cfg"}) EXPECT_TRUE(fs::exists(dir / "a" / f)) << f;
    const auto curve = slurp(dir / "a" / "loss.csv");
    EXPECT_EQ(std::count(curve.begin(), curve.end(), '\n'), 6);

    run_train_toy(g, {(dir / "data").string(), (dir / "b").string()}, log);
    EXPECT_EQ(slurp(dir / "b" / "loss.csv"), curve);
    EXPECT_EQ(slurp(dir / "b" / "weights.pftw"), slurp(dir / "a" / "weights.pftw"));

    ModelConfig saved = ModelConfig::resolve((dir / "a" / "model.cfg").string());
    EXPECT_EQ(saved.embed_dim, 4u);
    EXPECT_NO_THROW(load_weights<float>((dir / "a" / "weights.pftw").string(), saved));
}

TEST(TrainToyCommand, EmptyDataset) {
    auto dir = testing::fresh_dir("train_empty");
    fs::create_directories(dir / "data" / "hr");
    GlobalOptions g;
    EXPECT_THROW(run_train_toy(g, {(dir / "data").string(), (dir / "out").string()}, std::cout), Error);
}

TEST(Cli, ExitCodes) {
    auto dir = testing::fresh_dir("cli");
    EXPECT_NE(cli({}), 0);
    EXPECT_NE(cli({"bogus"}), 0);
    EXPECT_NE(cli({"--precision", "f16", "gradcheck"}), 0);
    EXPECT_EQ(cli({"infer", "--weights", "w", "--left", "l", "--right", "r", "--out", (dir / "o").string()}), 1);
    EXPECT_EQ(cli({"--config", tiny_config(dir).string(), "gradcheck", "--input-size", "4"}), 0);
    EXPECT_EQ(cli({"--config", tiny_config(dir).string(), "gradcheck", "--input-size", "4", "--tolerance", "1e-30"}),
              1);
    write_scene(dir / "ds" / "hr" / "x", testing::synthetic_pair(8, 8));
    EXPECT_EQ(cli({"prep", "--root", dir.string(), "--dataset", "ds", "--scale", "2"}), 0);
    EXPECT_NE(cli({"prep", "--root", dir.string(), "--dataset", "ds", "--scale", "3"}), 0);
}

}  // namespace
}  // namespace pft
