#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "genfusion/denoiser.hpp"

namespace genfusion {

struct DreamBoothConfig {
    std::string identifier = "sks";
    std::string class_noun = "tree";
    double lambda = 1.0;
    int prior_count = 200;
    int epochs = 6;
    AdamConfig adam{};

    /// "a <identifier> <class noun>"
    std::vector<std::string> instance_prompt() const { return {"a", identifier, class_noun}; }
    /// The instance prompt without the pseudo-word.
    std::vector<std::string> prior_prompt() const { return {"a", class_noun}; }
};

/// Latent-space images sharing one prompt.
struct ImageSet {
    std::vector<ImageTensor> images;
    std::vector<std::string> prompt;
    std::string provenance;
};

inline constexpr const char* kPriorProvenance = "generated-before-fine-tuning";

/// Reserved rare token to bind the subject to.
std::string select_pseudo_word(const PromptVocabulary& vocab);

/// Samples `config.prior_count` latents from the frozen pre-fine-tuning
/// model under the prior prompt. Image i uses Rng::stream(seed, i), so the
/// set does not depend on `jobs`.
ImageSet generate_prior_set(const DenoiserParams& frozen, const DiffusionSchedule& sched,
                            const PromptVocabulary& vocab, const DreamBoothConfig& config, Shape latent_shape,
                            std::uint64_t seed, int jobs = 1);

/// Instance term plus lambda times prior term, each mean-reduced. Draws the
/// instance epsilon first, then (only when lambda > 0) the prior epsilon.
LossAndGrads dreambooth_loss(const DenoiserParams& params, const DiffusionSchedule& sched,
                             const TrainingItem& instance, const TrainingItem& prior, double lambda, Rng& rng);

/// Batch-size-1 fine-tuning. Per step: instance timestep, prior timestep
/// (when lambda > 0), then the loss draws. Prior items are paired
/// round-robin across the whole run.
DenoiserParams finetune(const DenoiserParams& params, const DiffusionSchedule& sched, const PromptVocabulary& vocab,
                        const ImageSet& instances, const ImageSet& priors, const DreamBoothConfig& config,
                        Rng& rng, std::vector<double>* losses = nullptr);

/// Mean noise-prediction loss of `params` over `probe` under `cond`, with
/// timesteps and noise fixed by `seed`.
double prior_drift(const DenoiserParams& params, const DiffusionSchedule& sched, const std::vector<ImageTensor>& probe,
                   const ConditionVector& cond, std::uint64_t seed);

}  // namespace genfusion
