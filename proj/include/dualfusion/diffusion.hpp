#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "dualfusion/rng.hpp"
#include "dualfusion/tensor.hpp"

namespace dualfusion {

// Diffusion-time constants for t = 1..T, plus the t = 0 convention
// alpha_bar(0) = 1 so that a final DDIM step to t = 0 and the first
// posterior variance are well defined.
class Schedule {
 public:
  // Any betas in [0, 1); linear_schedule() is the usual entry point.
  static Schedule from_betas(std::vector<double> betas);

  std::size_t steps() const { return betas_.size() - 1; }
  double beta(std::size_t t) const;
  double alpha(std::size_t t) const;
  double alpha_bar(std::size_t t) const;  // valid for t = 0..T
  // beta_tilde_t = (1 - alpha_bar_{t-1}) / (1 - alpha_bar_t) * beta_t
  double posterior_variance(std::size_t t) const;

 private:
  std::vector<double> betas_, alphas_, alpha_bars_, posterior_;  // index 0 is the t = 0 sentinel
  void check_step(std::size_t t) const;
};

Schedule linear_schedule(std::size_t steps, double beta_start = 1e-4, double beta_end = 0.02);

// Schedule over the ascending subsequence `timesteps` of `base`, with
// beta_i = 1 - alpha_bar(t_i) / alpha_bar(t_{i-1}). Step i of the result
// corresponds to model timestep timesteps[i-1].
Schedule respace(const Schedule& base, std::span<const std::size_t> timesteps);

// Evenly spaced descending timesteps, starting at T, for a sampler with
// `count` steps; the sampler's final transition goes to t = 0.
std::vector<std::size_t> sampling_timesteps(std::size_t total_steps, std::size_t count);

enum class ReverseVariance { beta, beta_tilde };

// sqrt(alpha_bar_t) x0 + sqrt(1 - alpha_bar_t) eps
Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const Schedule& sched);
// (x_t - sqrt(1 - alpha_bar_t) eps_hat) / sqrt(alpha_bar_t)
Tensor predict_x0(const Tensor& x_t, std::size_t t, const Tensor& eps_hat, const Schedule& sched);
// 1/sqrt(alpha_t) (x_t - (1 - alpha_t)/sqrt(1 - alpha_bar_t) eps_hat)
Tensor mu_theta(const Tensor& x_t, std::size_t t, const Tensor& eps_hat, const Schedule& sched);
// Ancestral step; t = 1 returns the mean with no noise added.
Tensor ddpm_step(const Tensor& x_t, std::size_t t, const Tensor& eps_hat, const Schedule& sched, Rng& rng,
                 ReverseVariance variance = ReverseVariance::beta_tilde);
// Deterministic (eta = 0) DDIM update from t to t_next < t.
Tensor ddim_step(const Tensor& x_t, std::size_t t, std::size_t t_next, const Tensor& eps_hat,
                 const Schedule& sched);
// Noise estimate consistent with clamping the implied x0 to [-bound, bound]:
// eps' = (x_t - sqrt(ab) clamp(x0_hat)) / sqrt(1 - ab). Feeding eps' to
// ddim_step / ddpm_step is the usual "clip denoised" sampler variant.
Tensor clip_denoised_eps(const Tensor& x_t, std::size_t t, const Tensor& eps_hat, const Schedule& sched,
                         double bound);
// Mean squared error, tracked for training.
Tensor simple_loss(const Tensor& eps, const Tensor& eps_hat);

struct GaussianDataSpec {
  double mu0 = 0.0;
  double sigma0 = 1.0;
};

// Posterior-mean noise E[eps | x_t] when x0 ~ N(mu0, sigma0^2) i.i.d.:
// sqrt(1 - ab) (x_t - sqrt(ab) mu0) / (ab sigma0^2 + 1 - ab).
Tensor gaussian_oracle_eps(const Tensor& x_t, std::size_t t, const GaussianDataSpec& spec,
                           const Schedule& sched);

}  // namespace dualfusion
