#include "genfusion/diffusion.hpp"

#include <cmath>
#include <string>

#include "genfusion/error.hpp"
#include "genfusion/rng.hpp"

namespace genfusion {

namespace {

void require_step(int t, const DiffusionSchedule& sched, int lowest) {
    require(t >= lowest && t <= sched.steps, "step index " + std::to_string(t) + " outside [" +
                                                 std::to_string(lowest) + ", " +
                                                 std::to_string(sched.steps) + "]");
}

}  // namespace

DiffusionSchedule schedule_from_betas(std::vector<double> beta) {
    require(!beta.empty(), "schedule needs at least one step");
    DiffusionSchedule s;
    s.steps = static_cast<int>(beta.size());
    s.beta = std::move(beta);
    s.alpha.resize(s.beta.size());
    s.alpha_bar.resize(s.beta.size());
    s.sigma.resize(s.beta.size());
    double running = 1.0;
    for (std::size_t i = 0; i < s.beta.size(); ++i) {
        const double b = s.beta[i];
        require(b > 0.0 && b < 1.0, "beta values must lie in (0, 1)");
        require(i == 0 || b >= s.beta[i - 1], "beta must be non-decreasing");
        s.alpha[i] = 1.0 - b;
        running *= s.alpha[i];
        s.alpha_bar[i] = running;
        s.sigma[i] = std::sqrt(b);
    }
    return s;
}

DiffusionSchedule build_schedule(int steps, double beta_start, double beta_end) {
    require(steps >= 1, "schedule needs T >= 1");
    require(beta_start > 0.0 && beta_start < 1.0, "beta_start must lie in (0, 1)");
    require(beta_end > 0.0 && beta_end < 1.0, "beta_end must lie in (0, 1)");
    require(beta_start <= beta_end, "beta_start must not exceed beta_end");
    std::vector<double> beta(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / (steps - 1);
        beta[i] = beta_start + (beta_end - beta_start) * frac;
    }
    return schedule_from_betas(std::move(beta));
}

ImageTensor forward_step_with_rate(const ImageTensor& x_prev, double beta, const ImageTensor& noise) {
    require_same_shape(x_prev, noise, "forward_step");
    require(beta >= 0.0 && beta <= 1.0, "diffusion rate must lie in [0, 1]");
    const double keep = std::sqrt(1.0 - beta);
    const double add = std::sqrt(beta);
    ImageTensor out(x_prev.shape());
    auto o = out.data();
    auto x = x_prev.data();
    auto n = noise.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * keep + n[i] * add;
    return out;
}

ImageTensor forward_step(const ImageTensor& x_prev, int t, const DiffusionSchedule& sched,
                         const ImageTensor& noise) {
    require_step(t, sched, 1);
    return forward_step_with_rate(x_prev, sched.beta_at(t), noise);
}

ImageTensor forward_marginal(const ImageTensor& x0, int t, const DiffusionSchedule& sched,
                             const ImageTensor& noise) {
    require_same_shape(x0, noise, "forward_marginal");
    require_step(t, sched, 0);
    const double ab = sched.alpha_bar_at(t);
    const double keep = std::sqrt(ab);
    const double add = std::sqrt(1.0 - ab);
    ImageTensor out(x0.shape());
    auto o = out.data();
    auto x = x0.data();
    auto n = noise.data();
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] * keep + n[i] * add;
    return out;
}

std::vector<ImageTensor> simulate_forward_chain(const ImageTensor& x0, const DiffusionSchedule& sched,
                                                Rng& rng) {
    std::vector<ImageTensor> chain;
    chain.reserve(static_cast<std::size_t>(sched.steps) + 1);
    chain.push_back(x0);
    for (int t = 1; t <= sched.steps; ++t) {
        const ImageTensor noise = ImageTensor::standard_normal(x0.shape(), rng);
        chain.push_back(forward_step(chain.back(), t, sched, noise));
    }
    return chain;
}

double ddpm_loss(const ImageTensor& eps_pred, const ImageTensor& eps_true) {
    require_same_shape(eps_pred, eps_true, "ddpm_loss");
    auto p = eps_pred.data();
    auto q = eps_true.data();
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double d = p[i] - q[i];
        sum += d * d;
    }
    return sum / static_cast<double>(p.size());
}

ImageTensor sample_step(const ImageTensor& x_t, int t, const ImageTensor& eps_pred,
                        const DiffusionSchedule& sched, const std::optional<ImageTensor>& noise) {
    require_step(t, sched, 1);
    require_same_shape(x_t, eps_pred, "sample_step");
    const bool add_noise = t > 1 && noise.has_value();
    if (t > 1) require(noise.has_value(), "sample_step needs noise for t > 1");
    if (add_noise) require_same_shape(x_t, *noise, "sample_step noise");

    const double inv_sqrt_alpha = 1.0 / std::sqrt(sched.alpha_at(t));
    const double eps_coef = sched.beta_at(t) / std::sqrt(1.0 - sched.alpha_bar_at(t));
    const double sigma = sched.sigma_at(t);
    ImageTensor out(x_t.shape());
    auto o = out.data();
    auto x = x_t.data();
    auto e = eps_pred.data();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = inv_sqrt_alpha * (x[i] - eps_coef * e[i]);
        if (add_noise) o[i] += sigma * noise->data()[i];
    }
    return out;
}

ImageTensor sample(const NoisePredictor& predict, const DiffusionSchedule& sched, Shape shape, Rng& rng) {
    ImageTensor x = ImageTensor::standard_normal(shape, rng);
    for (int t = sched.steps; t >= 1; --t) {
        const ImageTensor eps = predict(x, t);
        std::optional<ImageTensor> noise;
        if (t > 1) noise = ImageTensor::standard_normal(shape, rng);
        x = sample_step(x, t, eps, sched, noise);
    }
    return clamp(x, -1.0, 1.0);
}

}  // namespace genfusion
