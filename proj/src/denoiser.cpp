#include "genfusion/denoiser.hpp"

#include <algorithm>
#include <cmath>

#include "genfusion/error.hpp"
#include "genfusion/rng.hpp"

namespace genfusion {

namespace {

ParamTensor make_tensor(std::string name, std::vector<int> shape) {
    std::size_t n = 1;
    for (int d : shape) n *= static_cast<std::size_t>(d);
    return ParamTensor{std::move(name), std::move(shape), std::vector<double>(n, 0.0)};
}

double silu(double a) { return a / (1.0 + std::exp(-a)); }

double silu_grad(double a) {
    const double s = 1.0 / (1.0 + std::exp(-a));
    return s * (1.0 + a * (1.0 - s));
}

// out[co] += sum_ci conv3x3(in[ci], w[co][ci]) + bias[co]; zero padding.
void conv3x3(const ImageTensor& in, const ParamTensor& w, const ParamTensor& b, ImageTensor& out) {
    const int cin = in.channels(), cout = out.channels(), h = in.height(), wd = in.width();
    for (int co = 0; co < cout; ++co) {
        auto dst = out.channel(co);
        std::fill(dst.begin(), dst.end(), b.values[co]);
        for (int ci = 0; ci < cin; ++ci) {
            auto src = in.channel(ci);
            const double* k = &w.values[(static_cast<std::size_t>(co) * cin + ci) * 9];
            for (int ky = 0; ky < 3; ++ky) {
                const int dy = ky - 1;
                const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                for (int kx = 0; kx < 3; ++kx) {
                    const int dx = kx - 1;
                    const int x0 = std::max(0, -dx), x1 = std::min(wd, wd - dx);
                    const double kv = k[ky * 3 + kx];
                    if (kv == 0.0) continue;
                    for (int y = y0; y < y1; ++y) {
                        double* o = &dst[static_cast<std::size_t>(y) * wd];
                        const double* s = src.data() + static_cast<std::size_t>(y + dy) * wd;
                        for (int x = x0; x < x1; ++x) o[x] += kv * s[x + dx];
                    }
                }
            }
        }
    }
}

// Given dL/dout, accumulate dL/dw and dL/db, and (optionally) write dL/din.
void conv3x3_backward(const ImageTensor& in, const ParamTensor& w, const ImageTensor& grad_out,
                      ParamTensor& grad_w, ParamTensor& grad_b, ImageTensor* grad_in, double weight) {
    const int cin = in.channels(), cout = grad_out.channels(), h = in.height(), wd = in.width();
    if (grad_in) std::fill(grad_in->values().begin(), grad_in->values().end(), 0.0);
    for (int co = 0; co < cout; ++co) {
        auto g = grad_out.channel(co);
        double gsum = 0.0;
        for (double v : g) gsum += v;
        grad_b.values[co] += weight * gsum;
        for (int ci = 0; ci < cin; ++ci) {
            auto src = in.channel(ci);
            const std::size_t kbase = (static_cast<std::size_t>(co) * cin + ci) * 9;
            for (int ky = 0; ky < 3; ++ky) {
                const int dy = ky - 1;
                const int y0 = std::max(0, -dy), y1 = std::min(h, h - dy);
                for (int kx = 0; kx < 3; ++kx) {
                    const int dx = kx - 1;
                    const int x0 = std::max(0, -dx), x1 = std::min(wd, wd - dx);
                    double acc = 0.0;
                    for (int y = y0; y < y1; ++y) {
                        const double* gr = &g[static_cast<std::size_t>(y) * wd];
                        const double* s = src.data() + static_cast<std::size_t>(y + dy) * wd;
                        for (int x = x0; x < x1; ++x) acc += gr[x] * s[x + dx];
                    }
                    grad_w.values[kbase + ky * 3 + kx] += weight * acc;
                    if (grad_in) {
                        const double kv = w.values[kbase + ky * 3 + kx];
                        auto gi = grad_in->channel(ci);
                        for (int y = y0; y < y1; ++y) {
                            const double* gr = &g[static_cast<std::size_t>(y) * wd];
                            double* d = gi.data() + static_cast<std::size_t>(y + dy) * wd;
                            for (int x = x0; x < x1; ++x) d[x + dx] += kv * gr[x];
                        }
                    }
                }
            }
        }
    }
}

// out = W v + b for a dense map stored row-major [rows][cols].
std::vector<double> dense(const ParamTensor& w, const ParamTensor& b, std::span<const double> v) {
    const std::size_t rows = b.values.size();
    const std::size_t cols = v.size();
    std::vector<double> out(b.values);
    for (std::size_t r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < cols; ++c) acc += w.values[r * cols + c] * v[c];
        out[r] += acc;
    }
    return out;
}

void add_per_channel(ImageTensor& x, const std::vector<double>& shift) {
    for (int c = 0; c < x.channels(); ++c)
        for (double& v : x.channel(c)) v += shift[c];
}

struct Activations {
    ImageTensor pre1, act1, pre2, act2, out;
};

Activations forward(const DenoiserParams& p, const ImageTensor& z_t, int t, const ConditionVector& cond) {
    const auto& cfg = p.config;
    require(z_t.channels() == cfg.latent_channels,
            "denoiser expects " + std::to_string(cfg.latent_channels) + " channels, got " +
                std::to_string(z_t.channels()));
    require(static_cast<int>(cond.values.size()) == cfg.cond_dim,
            "condition vector has dimension " + std::to_string(cond.values.size()) + ", expected " +
                std::to_string(cfg.cond_dim));
    const int h = z_t.height(), w = z_t.width();
    Activations a{ImageTensor(cfg.features, h, w), ImageTensor(cfg.features, h, w),
                  ImageTensor(cfg.features, h, w), ImageTensor(cfg.features, h, w),
                  ImageTensor(cfg.latent_channels, h, w)};

    conv3x3(z_t, p.conv_in_w, p.conv_in_b, a.pre1);
    add_per_channel(a.pre1, dense(p.time_w, p.time_b, sinusoidal_embed(t, cfg.time_dim)));
    for (std::size_t i = 0; i < a.pre1.size(); ++i) a.act1.values()[i] = silu(a.pre1.values()[i]);

    conv3x3(a.act1, p.conv_mid_w, p.conv_mid_b, a.pre2);
    add_per_channel(a.pre2, dense(p.cond_w, p.cond_b, cond.values));
    for (std::size_t i = 0; i < a.pre2.size(); ++i) a.act2.values()[i] = silu(a.pre2.values()[i]);

    conv3x3(a.act2, p.conv_out_w, p.conv_out_b, a.out);
    return a;
}

void dense_backward(const std::vector<double>& grad_out, std::span<const double> input, ParamTensor& grad_w,
                    ParamTensor& grad_b, double weight) {
    const std::size_t cols = input.size();
    for (std::size_t r = 0; r < grad_out.size(); ++r) {
        grad_b.values[r] += weight * grad_out[r];
        for (std::size_t c = 0; c < cols; ++c) grad_w.values[r * cols + c] += weight * grad_out[r] * input[c];
    }
}

std::vector<double> spatial_sums(const ImageTensor& x) {
    std::vector<double> s(static_cast<std::size_t>(x.channels()), 0.0);
    for (int c = 0; c < x.channels(); ++c)
        for (double v : x.channel(c)) s[c] += v;
    return s;
}

}  // namespace

DenoiserParams DenoiserParams::zeros(const DenoiserConfig& c) {
    require(c.latent_channels > 0 && c.features > 0 && c.time_dim > 0 && c.cond_dim > 0,
            "denoiser dimensions must be positive");
    require(c.time_dim % 2 == 0, "time embedding dimension must be even");
    DenoiserParams p;
    p.config = c;
    p.conv_in_w = make_tensor("conv_in.weight", {c.features, c.latent_channels, 3, 3});
    p.conv_in_b = make_tensor("conv_in.bias", {c.features});
    p.conv_mid_w = make_tensor("conv_mid.weight", {c.features, c.features, 3, 3});
    p.conv_mid_b = make_tensor("conv_mid.bias", {c.features});
    p.conv_out_w = make_tensor("conv_out.weight", {c.latent_channels, c.features, 3, 3});
    p.conv_out_b = make_tensor("conv_out.bias", {c.latent_channels});
    p.time_w = make_tensor("time_proj.weight", {c.features, c.time_dim});
    p.time_b = make_tensor("time_proj.bias", {c.features});
    p.cond_w = make_tensor("cond_proj.weight", {c.features, c.cond_dim});
    p.cond_b = make_tensor("cond_proj.bias", {c.features});
    return p;
}

std::array<ParamTensor*, DenoiserParams::tensor_count> DenoiserParams::tensors() {
    return {&conv_in_w, &conv_in_b, &conv_mid_w, &conv_mid_b, &conv_out_w,
            &conv_out_b, &time_w,    &time_b,     &cond_w,     &cond_b};
}

std::array<const ParamTensor*, DenoiserParams::tensor_count> DenoiserParams::tensors() const {
    return {&conv_in_w, &conv_in_b, &conv_mid_w, &conv_mid_b, &conv_out_w,
            &conv_out_b, &time_w,    &time_b,     &cond_w,     &cond_b};
}

ParamTensor& DenoiserParams::tensor(const std::string& name) {
    for (ParamTensor* t : tensors())
        if (t->name == name) return *t;
    fail_validation("unknown parameter tensor '" + name + "'");
}

bool DenoiserParams::all_finite() const {
    for (const ParamTensor* t : tensors())
        for (double v : t->values)
            if (!std::isfinite(v)) return false;
    return true;
}

const std::vector<std::string>& PromptVocabulary::default_tokens() {
    static const std::vector<std::string> tokens{"a", "tree", "apple", "green", "red", "sks"};
    return tokens;
}

PromptVocabulary PromptVocabulary::create(std::vector<std::string> tokens, std::vector<std::string> reserved,
                                          int dim, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> table(tokens.size() * static_cast<std::size_t>(std::max(dim, 0)));
    for (double& v : table) v = rng.normal();
    return from_table(std::move(tokens), std::move(reserved), dim, std::move(table));
}

PromptVocabulary PromptVocabulary::create_default(int dim, std::uint64_t seed) {
    return create(default_tokens(), {"sks"}, dim, seed);
}

PromptVocabulary PromptVocabulary::from_table(std::vector<std::string> tokens, std::vector<std::string> reserved,
                                              int dim, std::vector<double> table) {
    require(dim > 0, "vocabulary dimension must be positive");
    require(!tokens.empty(), "vocabulary needs at least one token");
    require(table.size() == tokens.size() * static_cast<std::size_t>(dim), "vocabulary table size mismatch");
    for (std::size_t i = 0; i < tokens.size(); ++i)
        for (std::size_t j = 0; j < i; ++j) require(tokens[i] != tokens[j], "duplicate token '" + tokens[i] + "'");
    for (const auto& r : reserved)
        require(std::find(tokens.begin(), tokens.end(), r) != tokens.end(),
                "reserved token '" + r + "' is not in the vocabulary");
    PromptVocabulary v;
    v.tokens_ = std::move(tokens);
    v.reserved_ = std::move(reserved);
    v.dim_ = dim;
    v.table_ = std::move(table);
    return v;
}

std::optional<std::size_t> PromptVocabulary::index_of(const std::string& token) const {
    auto it = std::find(tokens_.begin(), tokens_.end(), token);
    if (it == tokens_.end()) return std::nullopt;
    return static_cast<std::size_t>(it - tokens_.begin());
}

std::span<const double> PromptVocabulary::row(const std::string& token) const {
    auto idx = index_of(token);
    if (!idx) fail_validation("unknown token '" + token + "'");
    return std::span<const double>(table_).subspan(*idx * dim_, dim_);
}

bool PromptVocabulary::is_reserved(const std::string& token) const {
    return std::find(reserved_.begin(), reserved_.end(), token) != reserved_.end();
}

std::vector<double> sinusoidal_embed(int t, int dim) {
    require(dim > 0 && dim % 2 == 0, "sinusoidal embedding dimension must be even and positive");
    const int half = dim / 2;
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (int i = 0; i < half; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / dim);
        out[i] = std::sin(t * freq);
        out[half + i] = std::cos(t * freq);
    }
    return out;
}

ConditionVector embed_prompt(const std::vector<std::string>& tokens, const PromptVocabulary& vocab) {
    require(!tokens.empty(), "prompt has no tokens");
    ConditionVector c;
    c.values.assign(static_cast<std::size_t>(vocab.dim()), 0.0);
    for (const auto& tok : tokens) {
        auto r = vocab.row(tok);
        for (std::size_t i = 0; i < r.size(); ++i) c.values[i] += r[i];
    }
    for (double& v : c.values) v /= static_cast<double>(tokens.size());
    c.source_tokens = tokens;
    return c;
}

DenoiserParams init_params(const DenoiserConfig& config, Rng& rng) {
    DenoiserParams p = DenoiserParams::zeros(config);
    auto fill = [&rng](ParamTensor& t, int fan_in) {
        const double std = std::sqrt(2.0 / fan_in);
        for (double& v : t.values) v = rng.normal() * std;
    };
    fill(p.conv_in_w, 9 * config.latent_channels);
    fill(p.conv_mid_w, 9 * config.features);
    fill(p.conv_out_w, 9 * config.features);
    fill(p.time_w, config.time_dim);
    fill(p.cond_w, config.cond_dim);
    return p;
}

ImageTensor denoise_predict(const DenoiserParams& params, const ImageTensor& z_t, int t,
                            const ConditionVector& cond) {
    return forward(params, z_t, t, cond).out;
}

double accumulate_noise_loss(const DenoiserParams& p, const DiffusionSchedule& sched, const ImageTensor& z0,
                             int t, const ConditionVector& cond, const ImageTensor& eps, double weight,
                             DenoiserParams& g) {
    const ImageTensor z_t = forward_marginal(z0, t, sched, eps);
    Activations a = forward(p, z_t, t, cond);
    const double loss = ddpm_loss(a.out, eps);
    if (weight == 0.0) return loss;

    const double n = static_cast<double>(eps.size());
    ImageTensor d_out(a.out.shape());
    for (std::size_t i = 0; i < d_out.size(); ++i)
        d_out.values()[i] = 2.0 * (a.out.values()[i] - eps.values()[i]) / n;

    ImageTensor d_act2(a.act2.shape());
    conv3x3_backward(a.act2, p.conv_out_w, d_out, g.conv_out_w, g.conv_out_b, &d_act2, weight);
    ImageTensor& d_pre2 = d_act2;
    for (std::size_t i = 0; i < d_pre2.size(); ++i) d_pre2.values()[i] *= silu_grad(a.pre2.values()[i]);
    dense_backward(spatial_sums(d_pre2), cond.values, g.cond_w, g.cond_b, weight);

    ImageTensor d_act1(a.act1.shape());
    conv3x3_backward(a.act1, p.conv_mid_w, d_pre2, g.conv_mid_w, g.conv_mid_b, &d_act1, weight);
    ImageTensor& d_pre1 = d_act1;
    for (std::size_t i = 0; i < d_pre1.size(); ++i) d_pre1.values()[i] *= silu_grad(a.pre1.values()[i]);
    dense_backward(spatial_sums(d_pre1), sinusoidal_embed(t, p.config.time_dim), g.time_w, g.time_b, weight);

    conv3x3_backward(z_t, p.conv_in_w, d_pre1, g.conv_in_w, g.conv_in_b, nullptr, weight);
    return loss;
}

LossAndGrads loss_and_grads(const DenoiserParams& params, const DiffusionSchedule& sched,
                            const std::vector<TrainingItem>& batch, Rng& rng) {
    require(!batch.empty(), "loss_and_grads: empty batch");
    LossAndGrads out{0.0, DenoiserParams::zeros(params.config)};
    const double weight = 1.0 / static_cast<double>(batch.size());
    for (const auto& item : batch) {
        const ImageTensor eps = ImageTensor::standard_normal(item.z0.shape(), rng);
        out.loss += accumulate_noise_loss(params, sched, item.z0, item.t, item.cond, eps, weight, out.grads);
    }
    out.loss *= weight;
    return out;
}

AdamState AdamState::init(const DenoiserParams& like, const AdamConfig& hyper) {
    require(hyper.lr >= 0.0 && hyper.eps > 0.0 && hyper.weight_decay >= 0.0, "invalid Adam hyperparameters");
    require(hyper.beta1 >= 0.0 && hyper.beta1 < 1.0 && hyper.beta2 >= 0.0 && hyper.beta2 < 1.0,
            "Adam betas must lie in [0, 1)");
    return AdamState{DenoiserParams::zeros(like.config), DenoiserParams::zeros(like.config), 0, hyper};
}

void adam_step(DenoiserParams& params, const DenoiserParams& grads, AdamState& state) {
    require(params.config == grads.config && params.config == state.m.config, "adam_step: shape mismatch");
    require(state.step >= 0, "adam_step: negative step count");
    if (!grads.all_finite()) fail_validation("adam_step: non-finite gradient");

    const AdamConfig& h = state.hyper;
    const std::int64_t step = state.step + 1;
    const double bc1 = 1.0 - std::pow(h.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(h.beta2, static_cast<double>(step));
    const double decay = 1.0 - h.lr * h.weight_decay;

    auto p = params.tensors();
    auto g = grads.tensors();
    auto m = state.m.tensors();
    auto v = state.v.tensors();
    for (std::size_t k = 0; k < DenoiserParams::tensor_count; ++k) {
        for (std::size_t i = 0; i < p[k]->values.size(); ++i) {
            const double gi = g[k]->values[i];
            double& mi = m[k]->values[i];
            double& vi = v[k]->values[i];
            mi = h.beta1 * mi + (1.0 - h.beta1) * gi;
            vi = h.beta2 * vi + (1.0 - h.beta2) * gi * gi;
            const double m_hat = mi / bc1;
            const double v_hat = vi / bc2;
            double& pi = p[k]->values[i];
            pi *= decay;
            pi -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
        }
    }
    state.step = step;
}

ImageTensor sample(const DenoiserParams& params, const DiffusionSchedule& sched, const ConditionVector& cond,
                   Shape shape, Rng& rng) {
    require(shape.channels == params.config.latent_channels, "sample: channel count does not match denoiser");
    return sample([&](const ImageTensor& x, int t) { return denoise_predict(params, x, t, cond); }, sched, shape,
                  rng);
}

std::vector<double> train_denoiser(DenoiserParams& params, const DiffusionSchedule& sched,
                                   const std::vector<TrainExample>& examples, const TrainConfig& config, Rng& rng) {
    require(!examples.empty(), "train_denoiser: no training examples");
    require(config.steps >= 0 && config.batch_size >= 1, "train_denoiser: invalid step or batch count");
    AdamState state = AdamState::init(params, config.adam);
    std::vector<double> losses;
    losses.reserve(static_cast<std::size_t>(config.steps));
    const auto n = static_cast<std::int64_t>(examples.size());
    for (int step = 0; step < config.steps; ++step) {
        std::vector<TrainingItem> batch;
        batch.reserve(static_cast<std::size_t>(config.batch_size));
        for (int b = 0; b < config.batch_size; ++b) {
            const auto& ex = examples[static_cast<std::size_t>(rng.uniform_int(0, n - 1))];
            const int t = static_cast<int>(rng.uniform_int(1, sched.steps));
            batch.push_back(TrainingItem{ex.latent, t, ex.cond});
        }
        LossAndGrads lg = loss_and_grads(params, sched, batch, rng);
        adam_step(params, lg.grads, state);
        losses.push_back(lg.loss);
    }
    return losses;
}

std::vector<GradCheckEntry> gradient_check(const DenoiserParams& params, const LossFunction& fn, double step,
                                           double floor) {
    const LossAndGrads lg = fn(params);
    std::vector<GradCheckEntry> report;
    DenoiserParams probe = params;
    auto probe_tensors = probe.tensors();
    auto grad_tensors = lg.grads.tensors();
    for (std::size_t k = 0; k < DenoiserParams::tensor_count; ++k) {
        // Error is scaled by the tensor's largest gradient magnitude: per-element
        // ratios are dominated by difference truncation where a gradient is near 0.
        double max_diff = 0.0;
        double scale = floor;
        for (std::size_t i = 0; i < probe_tensors[k]->values.size(); ++i) {
            double& w = probe_tensors[k]->values[i];
            const double orig = w;
            w = orig + step;
            const double up = fn(probe).loss;
            w = orig - step;
            const double down = fn(probe).loss;
            w = orig;
            const double numeric = (up - down) / (2.0 * step);
            const double analytic = grad_tensors[k]->values[i];
            max_diff = std::max(max_diff, std::abs(analytic - numeric));
            scale = std::max({scale, std::abs(analytic), std::abs(numeric)});
        }
        GradCheckEntry entry{probe_tensors[k]->name, max_diff / scale};
        report.push_back(entry);
    }
    return report;
}

}  // namespace genfusion
