#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "genfusion/tensor.hpp"

namespace genfusion {

class Rng;

/// Linear Gaussian diffusion schedule. Step indices run 1..T; arrays are
/// stored 0-based so beta[t - 1] is the rate of step t. A virtual step 0
/// has alpha_bar = 1 so the t = 0 marginal is the identity.
struct DiffusionSchedule {
    int steps = 0;
    std::vector<double> beta;
    std::vector<double> alpha;
    std::vector<double> alpha_bar;
    std::vector<double> sigma;

    double beta_at(int t) const { return beta.at(t - 1); }
    double alpha_at(int t) const { return alpha.at(t - 1); }
    double alpha_bar_at(int t) const { return t == 0 ? 1.0 : alpha_bar.at(t - 1); }
    double sigma_at(int t) const { return sigma.at(t - 1); }

    friend bool operator==(const DiffusionSchedule&, const DiffusionSchedule&) = default;
};

DiffusionSchedule build_schedule(int steps, double beta_start, double beta_end);

/// Rebuild derived arrays from an explicit beta sequence (checkpoint loading).
DiffusionSchedule schedule_from_betas(std::vector<double> beta);

/// One forward noising step at an explicit rate; beta may be 0 or 1 here.
ImageTensor forward_step_with_rate(const ImageTensor& x_prev, double beta, const ImageTensor& noise);

ImageTensor forward_step(const ImageTensor& x_prev, int t, const DiffusionSchedule& sched,
                         const ImageTensor& noise);

/// Closed-form sample of x_t given x_0, for t in [0, T].
ImageTensor forward_marginal(const ImageTensor& x0, int t, const DiffusionSchedule& sched,
                             const ImageTensor& noise);

/// [x_0, x_1, ..., x_T], each step drawing fresh standard-normal noise from rng.
std::vector<ImageTensor> simulate_forward_chain(const ImageTensor& x0, const DiffusionSchedule& sched,
                                                Rng& rng);

/// Mean squared error over all elements.
double ddpm_loss(const ImageTensor& eps_pred, const ImageTensor& eps_true);

/// One ancestral reverse step. Noise is ignored at t = 1.
ImageTensor sample_step(const ImageTensor& x_t, int t, const ImageTensor& eps_pred,
                        const DiffusionSchedule& sched, const std::optional<ImageTensor>& noise);

using NoisePredictor = std::function<ImageTensor(const ImageTensor& x_t, int t)>;

/// Full reverse chain from x_T ~ N(0, I); the result is clamped to [-1, 1]
/// once, after the last step.
ImageTensor sample(const NoisePredictor& predict, const DiffusionSchedule& sched, Shape shape, Rng& rng);

}  // namespace genfusion
