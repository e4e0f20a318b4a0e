#include "genfusion/dreambooth.hpp"

#include "genfusion/error.hpp"
#include "genfusion/parallel.hpp"
#include "genfusion/rng.hpp"

namespace genfusion {

std::string select_pseudo_word(const PromptVocabulary& vocab) {
    if (vocab.reserved().empty()) fail_validation("vocabulary has no reserved rare token");
    return vocab.reserved().front();
}

ImageSet generate_prior_set(const DenoiserParams& frozen, const DiffusionSchedule& sched,
                            const PromptVocabulary& vocab, const DreamBoothConfig& config, Shape latent_shape,
                            std::uint64_t seed, int jobs) {
    require(config.prior_count >= 0, "prior_count must be non-negative");
    ImageSet set{std::vector<ImageTensor>(static_cast<std::size_t>(config.prior_count)), config.prior_prompt(),
                 kPriorProvenance};
    const ConditionVector cond = embed_prompt(set.prompt, vocab);
    parallel_for(set.images.size(), jobs, [&](std::size_t i) {
        Rng rng = Rng::stream(seed, i);
        set.images[i] = sample(frozen, sched, cond, latent_shape, rng);
    });
    return set;
}

LossAndGrads dreambooth_loss(const DenoiserParams& params, const DiffusionSchedule& sched,
                             const TrainingItem& instance, const TrainingItem& prior, double lambda, Rng& rng) {
    require(lambda >= 0.0, "prior weight lambda must be non-negative");
    require_same_shape(instance.z0, prior.z0, "dreambooth_loss");
    LossAndGrads out{0.0, DenoiserParams::zeros(params.config)};
    const ImageTensor eps = ImageTensor::standard_normal(instance.z0.shape(), rng);
    out.loss = accumulate_noise_loss(params, sched, instance.z0, instance.t, instance.cond, eps, 1.0, out.grads);
    if (lambda > 0.0) {
        const ImageTensor eps_prior = ImageTensor::standard_normal(prior.z0.shape(), rng);
        out.loss += lambda * accumulate_noise_loss(params, sched, prior.z0, prior.t, prior.cond, eps_prior, lambda,
                                                   out.grads);
    }
    return out;
}

DenoiserParams finetune(const DenoiserParams& params, const DiffusionSchedule& sched, const PromptVocabulary& vocab,
                        const ImageSet& instances, const ImageSet& priors, const DreamBoothConfig& config, Rng& rng,
                        std::vector<double>* losses) {
    require(!instances.images.empty(), "finetune: empty instance set");
    require(config.lambda >= 0.0, "finetune: lambda must be non-negative");
    require(config.lambda == 0.0 || !priors.images.empty(), "finetune: lambda > 0 needs a non-empty prior set");
    require(config.epochs >= 0, "finetune: epochs must be non-negative");

    DenoiserParams tuned = params;
    AdamState state = AdamState::init(tuned, config.adam);
    const ConditionVector instance_cond = embed_prompt(instances.prompt, vocab);
    const ConditionVector prior_cond =
        priors.prompt.empty() ? embed_prompt(config.prior_prompt(), vocab) : embed_prompt(priors.prompt, vocab);

    std::size_t pair_index = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        for (const ImageTensor& image : instances.images) {
            TrainingItem inst{image, static_cast<int>(rng.uniform_int(1, sched.steps)), instance_cond};
            LossAndGrads lg;
            if (config.lambda > 0.0) {
                const ImageTensor& prior_image = priors.images[pair_index % priors.images.size()];
                TrainingItem prior{prior_image, static_cast<int>(rng.uniform_int(1, sched.steps)), prior_cond};
                lg = dreambooth_loss(tuned, sched, inst, prior, config.lambda, rng);
            } else {
                lg = loss_and_grads(tuned, sched, {inst}, rng);
            }
            ++pair_index;
            adam_step(tuned, lg.grads, state);
            if (losses) losses->push_back(lg.loss);
        }
    }
    return tuned;
}

double prior_drift(const DenoiserParams& params, const DiffusionSchedule& sched, const std::vector<ImageTensor>& probe,
                   const ConditionVector& cond, std::uint64_t seed) {
    require(!probe.empty(), "prior_drift: empty probe set");
    Rng rng(seed);
    double total = 0.0;
    for (const ImageTensor& z0 : probe) {
        const int t = static_cast<int>(rng.uniform_int(1, sched.steps));
        const ImageTensor eps = ImageTensor::standard_normal(z0.shape(), rng);
        const ImageTensor z_t = forward_marginal(z0, t, sched, eps);
        total += ddpm_loss(denoise_predict(params, z_t, t, cond), eps);
    }
    return total / static_cast<double>(probe.size());
}

}  // namespace genfusion
