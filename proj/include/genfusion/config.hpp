#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "genfusion/annotation.hpp"
#include "genfusion/blob_detector.hpp"
#include "genfusion/denoiser.hpp"
#include "genfusion/dreambooth.hpp"
#include "genfusion/reduce.hpp"
#include "genfusion/scene.hpp"

namespace genfusion {

/// Every tunable of a pipeline run. Serialised as `key = value` lines;
/// absent keys keep these defaults, unknown keys are rejected.
struct RunConfig {
    std::uint64_t seed = 1;
    int jobs = 1;

    SceneSpec scene{};
    int synth_count = 120;
    int synth_train = 80;
    int synth_val = 20;

    int codec_factor = 2;

    int schedule_steps = 100;
    double beta_start = 1e-3;
    double beta_end = 0.1;

    DenoiserConfig denoiser{};
    int pretrain_steps = 2000;
    int pretrain_batch = 8;
    AdamConfig pretrain_adam{.lr = 2e-3, .weight_decay = 0.0};

    DreamBoothConfig dreambooth{.prior_count = 40, .epochs = 6, .adam = {.lr = 1e-3, .weight_decay = 1e-2}};
    int instance_count = 10;
    bool shared_priors = true;
    bool annotation_channel = false;

    int generate_total = 536;
    int green_weight = 54;
    int red_weight = 482;

    DotConfig dots{};
    FilterConfig filter{};
    BlobDetectorConfig detector = BlobDetectorConfig::apples();
    double nms_iou = 0.45;

    void validate() const;
};

RunConfig parse_config(const std::string& text, const std::string& source = "<config>");
RunConfig load_config(const std::filesystem::path& path);

/// Full `key = value` echo, one line per key in a fixed order. Parsing the
/// dump reproduces the config exactly.
std::string dump_config(const RunConfig& config);

}  // namespace genfusion
