#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "genfusion/config.hpp"

namespace genfusion {

/// Shared context of every pipeline command. All artifacts live under
/// `out`, one subdirectory per stage:
///   synth/ pretrain/ priors/ finetune/ generate/ annotate/ filter/ detect/ eval/ runs/
struct PipelineContext {
    RunConfig config;
    std::filesystem::path out;
};

enum class AnnotateMode { encode_dots, encode_outlines, extract };

AnnotateMode annotate_mode_from_string(const std::string& s);

/// Procedural scenes, their ground truth, and a split manifest.
void cmd_synth(const PipelineContext& ctx);
/// Trains the base model on the train split with the prompt "a tree".
void cmd_pretrain(const PipelineContext& ctx);
/// Samples the prior-preservation set from the pretrained model.
void cmd_prior_gen(const PipelineContext& ctx);
/// Two DreamBooth fine-tunes: green-apple and red-apple subjects.
void cmd_finetune(const PipelineContext& ctx);
/// Samples the colour-balanced synthetic dataset from both fine-tunes.
void cmd_generate(const PipelineContext& ctx);
/// Encodes ground truth into the annotation channel, or extracts dots from it.
/// `input` names a stage directory holding a manifest (default: synth for
/// encoding, generate for extraction).
void cmd_annotate(const PipelineContext& ctx, AnnotateMode mode, const std::string& input = {});
/// Keeps the largest PCA/t-SNE/k-means cluster of a stage's images.
void cmd_filter(const PipelineContext& ctx, const std::string& input = "generate");
/// Runs the colour-blob stand-in detector on one split of a stage.
void cmd_detect(const PipelineContext& ctx, const std::string& input = "synth", const std::string& split = "test");
/// Scores one or more detection directories against a ground-truth manifest.
void cmd_eval(const PipelineContext& ctx, const std::vector<std::filesystem::path>& detection_dirs = {},
              const std::filesystem::path& ground_truth = {});
/// Finite-difference check of both loss paths; returns true on pass.
bool cmd_gradcheck(const PipelineContext& ctx);

}  // namespace genfusion
