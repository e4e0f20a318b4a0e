#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "genfusion/error.hpp"
#include "genfusion/pipeline.hpp"

namespace fs = std::filesystem;
using namespace genfusion;

int main(int argc, char** argv) {
    CLI::App app{"genfusion: toy text-to-image augmentation pipeline for orchard detection"};
    app.require_subcommand(1);

    std::string config_path;
    std::uint64_t seed = 0;
    int jobs = 0;
    std::string out = "out";
    app.add_option("--config", config_path, "key = value config file")->check(CLI::ExistingFile);
    auto* seed_opt = app.add_option("--seed", seed, "master seed (overrides the config)");
    auto* jobs_opt = app.add_option("--jobs", jobs, "worker threads (overrides the config)");
    app.add_option("--out", out, "artifact root directory")->capture_default_str();

    auto* synth = app.add_subcommand("synth", "generate procedural orchard scenes");
    auto* pretrain = app.add_subcommand("pretrain", "train the base denoiser on synth scenes");
    auto* prior_gen = app.add_subcommand("prior-gen", "sample the prior-preservation set");
    auto* finetune = app.add_subcommand("finetune", "fine-tune green and red subjects");
    auto* generate = app.add_subcommand("generate", "sample the colour-balanced dataset");

    auto* annotate = app.add_subcommand("annotate", "encode or extract the annotation channel");
    std::string mode = "encode-dots";
    std::string annotate_input;
    annotate->add_option("--mode", mode, "encode-dots | encode-outlines | extract")->capture_default_str();
    annotate->add_option("--input", annotate_input, "stage directory to read (default depends on mode)");

    auto* filter = app.add_subcommand("filter", "keep the largest image cluster");
    std::string filter_input = "generate";
    filter->add_option("--input", filter_input, "stage directory to read")->capture_default_str();

    auto* detect = app.add_subcommand("detect", "run the colour-blob stand-in detector");
    std::string detect_input = "synth";
    std::string split = "test";
    detect->add_option("--input", detect_input, "stage directory to read")->capture_default_str();
    detect->add_option("--split", split, "train | val | test | all")->capture_default_str();

    auto* eval = app.add_subcommand("eval", "score detections against ground truth");
    std::vector<std::string> detection_dirs;
    std::string ground_truth;
    eval->add_option("--detections", detection_dirs, "detection directories, one per run (default OUT/detect)");
    eval->add_option("--ground-truth", ground_truth, "ground-truth manifest (default OUT/synth/manifest.jsonl)");

    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of the loss gradients");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        PipelineContext ctx;
        if (!config_path.empty()) ctx.config = load_config(config_path);
        if (*seed_opt) ctx.config.seed = seed;
        if (*jobs_opt) ctx.config.jobs = jobs;
        ctx.config.validate();
        ctx.out = fs::path(out).lexically_normal();

        if (*synth) cmd_synth(ctx);
        else if (*pretrain) cmd_pretrain(ctx);
        else if (*prior_gen) cmd_prior_gen(ctx);
        else if (*finetune) cmd_finetune(ctx);
        else if (*generate) cmd_generate(ctx);
        else if (*annotate) cmd_annotate(ctx, annotate_mode_from_string(mode), annotate_input);
        else if (*filter) cmd_filter(ctx, filter_input);
        else if (*detect) cmd_detect(ctx, detect_input, split);
        else if (*eval) {
            std::vector<fs::path> dirs(detection_dirs.begin(), detection_dirs.end());
            cmd_eval(ctx, dirs, ground_truth);
        } else if (*gradcheck) {
            return cmd_gradcheck(ctx) ? 0 : 1;
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}
