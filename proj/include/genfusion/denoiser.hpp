#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "genfusion/diffusion.hpp"
#include "genfusion/tensor.hpp"

namespace genfusion {

class Rng;

struct DenoiserConfig {
    int latent_channels = 3;
    int features = 16;
    int time_dim = 16;
    int cond_dim = 16;

    friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

/// A named, flat parameter tensor.
struct ParamTensor {
    std::string name;
    std::vector<int> shape;
    std::vector<double> values;

    friend bool operator==(const ParamTensor&, const ParamTensor&) = default;
};

/// Weights of the conditioned noise predictor:
///   h1  = SiLU(conv_in(z) + time_proj(embed(t)))
///   h2  = SiLU(conv_mid(h1) + cond_proj(c))
///   out = conv_out(h2)
/// Convolutions are 3x3 with zero padding. Projections add one scalar per
/// feature map.
struct DenoiserParams {
    DenoiserConfig config;
    ParamTensor conv_in_w, conv_in_b;
    ParamTensor conv_mid_w, conv_mid_b;
    ParamTensor conv_out_w, conv_out_b;
    ParamTensor time_w, time_b;
    ParamTensor cond_w, cond_b;

    static constexpr std::size_t tensor_count = 10;

    /// Correctly shaped, all zero.
    static DenoiserParams zeros(const DenoiserConfig& config);

    std::array<ParamTensor*, tensor_count> tensors();
    std::array<const ParamTensor*, tensor_count> tensors() const;
    ParamTensor& tensor(const std::string& name);

    bool all_finite() const;

    friend bool operator==(const DenoiserParams&, const DenoiserParams&) = default;
};

/// Frozen token-embedding table standing in for a text encoder.
class PromptVocabulary {
public:
    static const std::vector<std::string>& default_tokens();

    /// Rows are drawn from N(0, 1) with a generator seeded by `seed`.
    static PromptVocabulary create(std::vector<std::string> tokens, std::vector<std::string> reserved,
                                   int dim, std::uint64_t seed);
    static PromptVocabulary create_default(int dim, std::uint64_t seed);

    /// Rebuild from stored rows (checkpoint loading).
    static PromptVocabulary from_table(std::vector<std::string> tokens, std::vector<std::string> reserved,
                                       int dim, std::vector<double> table);

    int dim() const { return dim_; }
    const std::vector<std::string>& tokens() const { return tokens_; }
    const std::vector<std::string>& reserved() const { return reserved_; }
    const std::vector<double>& table() const { return table_; }

    std::optional<std::size_t> index_of(const std::string& token) const;
    std::span<const double> row(const std::string& token) const;
    bool is_reserved(const std::string& token) const;

    friend bool operator==(const PromptVocabulary&, const PromptVocabulary&) = default;

private:
    std::vector<std::string> tokens_;
    std::vector<std::string> reserved_;
    int dim_ = 0;
    std::vector<double> table_;
};

struct ConditionVector {
    std::vector<double> values;
    std::vector<std::string> source_tokens;

    friend bool operator==(const ConditionVector&, const ConditionVector&) = default;
};

std::vector<double> sinusoidal_embed(int t, int dim);

/// Mean of the token rows.
ConditionVector embed_prompt(const std::vector<std::string>& tokens, const PromptVocabulary& vocab);

/// He-normal kernels and projections, zero biases.
DenoiserParams init_params(const DenoiserConfig& config, Rng& rng);

ImageTensor denoise_predict(const DenoiserParams& params, const ImageTensor& z_t, int t,
                            const ConditionVector& cond);

/// Accumulate `weight` times the gradient of ddpm_loss(predict(z_t), eps)
/// into `grads`, where z_t = forward_marginal(z0, t, eps). Returns the
/// unweighted loss.
double accumulate_noise_loss(const DenoiserParams& params, const DiffusionSchedule& sched,
                             const ImageTensor& z0, int t, const ConditionVector& cond,
                             const ImageTensor& eps, double weight, DenoiserParams& grads);

struct TrainingItem {
    ImageTensor z0;
    int t = 1;
    ConditionVector cond;
};

struct LossAndGrads {
    double loss = 0.0;
    DenoiserParams grads;
};

/// Batch-mean noise-prediction loss with exact gradients. One standard
/// normal epsilon is drawn per item, in batch order.
LossAndGrads loss_and_grads(const DenoiserParams& params, const DiffusionSchedule& sched,
                            const std::vector<TrainingItem>& batch, Rng& rng);

struct AdamConfig {
    double lr = 2e-6;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-2;

    friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

struct AdamState {
    DenoiserParams m;
    DenoiserParams v;
    std::int64_t step = 0;
    AdamConfig hyper;

    static AdamState init(const DenoiserParams& like, const AdamConfig& hyper);
};

/// Bias-corrected Adam with decoupled weight decay, in place. Throws
/// ValidationError (leaving params and state untouched) on non-finite grads.
void adam_step(DenoiserParams& params, const DenoiserParams& grads, AdamState& state);

ImageTensor sample(const DenoiserParams& params, const DiffusionSchedule& sched, const ConditionVector& cond,
                   Shape shape, Rng& rng);

struct TrainExample {
    ImageTensor latent;
    ConditionVector cond;
};

struct TrainConfig {
    int steps = 2000;
    int batch_size = 8;
    AdamConfig adam{.lr = 2e-3, .weight_decay = 0.0};
};

/// Minibatch training: each step draws batch_size examples and timesteps
/// uniformly, then applies one Adam update. Returns the per-step loss.
std::vector<double> train_denoiser(DenoiserParams& params, const DiffusionSchedule& sched,
                                   const std::vector<TrainExample>& examples, const TrainConfig& config,
                                   Rng& rng);

struct GradCheckEntry {
    std::string tensor;
    double max_rel_error = 0.0;
};

/// Deterministic loss evaluation: must return the same value for the same
/// params (fix any noise draws inside).
using LossFunction = std::function<LossAndGrads(const DenoiserParams&)>;

/// Analytic gradients of `fn` against central differences of its loss.
/// Relative error per tensor is
/// max_i |analytic_i - numeric_i| / max(max_i |analytic_i|, max_i |numeric_i|, floor).
std::vector<GradCheckEntry> gradient_check(const DenoiserParams& params, const LossFunction& fn,
                                           double step = 1e-3, double floor = 1e-6);

}  // namespace genfusion
