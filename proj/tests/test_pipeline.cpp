#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>
#include <sys/wait.h>
#include <unistd.h>

#include "genfusion/checkpoint.hpp"
#include "genfusion/error.hpp"
#include "genfusion/manifest.hpp"
#include "genfusion/pipeline.hpp"

using namespace genfusion;
namespace fs = std::filesystem;

namespace {

const char* kTinyConfig = R"(scene.height = 16
scene.width = 16
scene.max_radius = 4
synth.count = 12
synth.train = 8
synth.val = 2
schedule.steps = 10
denoiser.features = 6
pretrain.steps = 20
pretrain.batch = 4
dreambooth.prior_count = 4
dreambooth.epochs = 1
dreambooth.instances = 2
generate.total = 20
filter.tsne_iters = 150
)";

class PipelineTest : public ::testing::Test {
protected:
    void SetUp() override {
        root_ = fs::temp_directory_path() /
                ("genfusion_pipe_" + std::to_string(::getpid()) + "_" +
                 ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(root_);
        fs::create_directories(root_);
    }
    void TearDown() override { fs::remove_all(root_); }

    // `extra` lines replace tiny-config lines with the same key
    PipelineContext context(const std::string& sub, const std::string& extra = "") const {
        std::set<std::string> overridden;
        std::istringstream ex(extra);
        for (std::string line; std::getline(ex, line);) overridden.insert(line.substr(0, line.find(' ')));
        std::string text;
        std::istringstream base(kTinyConfig);
        for (std::string line; std::getline(base, line);)
            if (!overridden.count(line.substr(0, line.find(' ')))) text += line + "\n";
        return {parse_config(text + extra), root_ / sub};
    }

    fs::path root_;
};

void run_chain(const PipelineContext& ctx) {
    cmd_synth(ctx);
    cmd_pretrain(ctx);
    cmd_prior_gen(ctx);
    cmd_finetune(ctx);
    cmd_generate(ctx);
    cmd_annotate(ctx, AnnotateMode::encode_dots);
    cmd_annotate(ctx, AnnotateMode::extract);
    cmd_filter(ctx);
    cmd_detect(ctx, "synth", "test");
    cmd_eval(ctx);
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        files[e.path().lexically_relative(dir).generic_string()] = ss.str();
    }
    return files;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(GENFUSION_CLI_PATH) + " " + args + " 2>/dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_F(PipelineTest, ChainIsDeterministicAndWorkerCountFree) {
    const auto a = context("a"), b = context("b"), c = context("c", "jobs = 3\n");
    run_chain(a);
    run_chain(b);
    run_chain(c);
    const auto sa = snapshot(a.out), sb = snapshot(b.out), sc = snapshot(c.out);
    ASSERT_GT(sa.size(), 50u);
    EXPECT_TRUE(sa == sb);
    ASSERT_EQ(sa.size(), sc.size());
    for (const auto& [name, bytes] : sa) {
        ASSERT_TRUE(sc.count(name)) << name;
        // the run manifests echo the args, which include the job count
        if (name.rfind("runs/", 0) != 0) EXPECT_TRUE(bytes == sc.at(name)) << name;
    }
    for (const char* f : {"synth/manifest.jsonl", "pretrain/model.ckpt", "pretrain/loss.csv", "priors/manifest.jsonl",
                          "finetune/green.ckpt", "finetune/red.ckpt", "generate/manifest.jsonl",
                          "annotate/encode-dots/manifest.jsonl", "filter/report.json", "detect/manifest.jsonl",
                          "eval/report.json", "runs/eval.json"})
        EXPECT_TRUE(sa.count(f)) << f;
}

TEST_F(PipelineTest, GenerateBalancesColours) {
    const auto ctx = context("g");
    cmd_synth(ctx);
    cmd_pretrain(ctx);
    cmd_prior_gen(ctx);
    cmd_finetune(ctx);
    cmd_generate(ctx);
    const auto m = read_manifest(ctx.out / "generate" / "manifest.jsonl");
    std::size_t green = 0, red = 0;
    for (const auto& e : m.entries) {
        EXPECT_EQ(e.provenance, Provenance::generated);
        (e.color == "green" ? green : red) += 1;
        EXPECT_TRUE(fs::exists(ctx.out / "generate" / e.image)) << e.image;
    }
    EXPECT_EQ(green, 2u);  // round(20 * 54 / 536)
    EXPECT_EQ(red, 18u);
}

TEST_F(PipelineTest, ZeroEpochFinetuneKeepsPretrainedWeights) {
    const auto ctx = context("z", "dreambooth.epochs = 0\n");
    cmd_synth(ctx);
    cmd_pretrain(ctx);
    cmd_prior_gen(ctx);
    cmd_finetune(ctx);
    const auto base = load_checkpoint(ctx.out / "pretrain" / "model.ckpt");
    for (const char* colour : {"green", "red"}) {
        const auto ft = load_checkpoint(ctx.out / "finetune" / (std::string(colour) + ".ckpt"));
        EXPECT_EQ(ft.params, base.params) << colour;
        EXPECT_EQ(ft.schedule, base.schedule);
    }
}

TEST_F(PipelineTest, StageCompatibilityChecked) {
    const auto ctx = context("s");
    cmd_synth(ctx);
    cmd_pretrain(ctx);
    auto other = context("s", "schedule.steps = 12\n");
    EXPECT_THROW(cmd_prior_gen(other), ValidationError);
    auto dims = context("s", "denoiser.features = 8\n");
    EXPECT_THROW(cmd_prior_gen(dims), ValidationError);
    EXPECT_THROW(cmd_generate(ctx), RuntimeError);  // no fine-tuned checkpoints yet
    EXPECT_THROW(cmd_pretrain(context("empty")), RuntimeError);
}

TEST_F(PipelineTest, EmptySynthAndEvalOnBlobDetections) {
    const auto none = context("none", "synth.count = 0\nsynth.train = 0\nsynth.val = 0\n");
    cmd_synth(none);
    EXPECT_TRUE(read_manifest(none.out / "synth" / "manifest.jsonl").entries.empty());

    const auto ctx = context("e", "synth.count = 30\n");
    cmd_synth(ctx);
    cmd_detect(ctx, "synth", "all");
    cmd_eval(ctx);
    std::ifstream in(ctx.out / "eval" / "report.json");
    const auto j = nlohmann::json::parse(in);
    ASSERT_EQ(j["runs"].size(), 1u);
    EXPECT_GE(j["runs"][0]["ap50"].get<double>(), 0.9);
    EXPECT_EQ(j["runs"][0]["images"].get<int>(), 30);
    EXPECT_EQ(j["aggregate"][0]["std"].get<double>(), 0.0);
    const auto rec = nlohmann::json::parse(std::ifstream(ctx.out / "runs" / "eval.json"));
    EXPECT_EQ(rec["command"], "eval");
    EXPECT_FALSE(rec["inputs"].empty());
}

TEST_F(PipelineTest, EvalListsDetectionsWithoutGroundTruth) {
    const auto ctx = context("m");
    cmd_synth(ctx);
    cmd_detect(ctx, "synth", "all");
    auto gt = read_manifest(ctx.out / "synth" / "manifest.jsonl");
    gt.entries.erase(gt.entries.begin(), gt.entries.begin() + 2);
    write_manifest(ctx.out / "synth" / "partial.jsonl", gt);
    try {
        cmd_eval(ctx, {}, ctx.out / "synth" / "partial.jsonl");
        FAIL();
    } catch (const ValidationError& e) {
        const std::string msg = e.what();
        EXPECT_NE(msg.find("scene_0000.json"), std::string::npos) << msg;
        EXPECT_NE(msg.find("scene_0001.json"), std::string::npos) << msg;
    }
}

TEST_F(PipelineTest, GradcheckPasses) {
    for (const char* seed : {"1", "2"}) EXPECT_TRUE(cmd_gradcheck(context("gc", std::string("seed = ") + seed + "\n")));
}

TEST_F(PipelineTest, CliExitCodes) {
    const auto cfg = root_ / "tiny.cfg";
    std::ofstream(cfg) << kTinyConfig;
    const std::string base = "--config " + cfg.string() + " --out " + (root_ / "cli").string();
    EXPECT_EQ(run_cli(""), 2);
    EXPECT_EQ(run_cli(base + " frobnicate"), 2);
    EXPECT_EQ(run_cli(base + " pretrain"), 1);
    EXPECT_EQ(run_cli(base + " synth"), 0);
    EXPECT_TRUE(fs::exists(root_ / "cli" / "synth" / "manifest.jsonl"));
    std::ofstream(root_ / "bad.cfg") << "no.such.key = 1\n";
    EXPECT_EQ(run_cli("--config " + (root_ / "bad.cfg").string() + " synth"), 2);
    EXPECT_EQ(run_cli(base + " annotate --mode sideways"), 2);
    EXPECT_EQ(run_cli(base + " gradcheck"), 0);
}
