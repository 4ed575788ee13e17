#include "dualfusion/diffusion.hpp"

#include <algorithm>
#include <cmath>

#include "dualfusion/errors.hpp"
#include "dualfusion/ops.hpp"

namespace dualfusion {

Schedule Schedule::from_betas(std::vector<double> betas) {
  if (betas.empty()) throw InvalidArgument("schedule needs at least one step");
  Schedule s;
  const std::size_t T = betas.size();
  s.betas_.assign(T + 1, 0.0);
  s.alphas_.assign(T + 1, 1.0);
  s.alpha_bars_.assign(T + 1, 1.0);
  s.posterior_.assign(T + 1, 0.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const double b = betas[t - 1];
    if (!(b >= 0.0 && b < 1.0)) throw InvalidArgument("schedule beta outside [0, 1) at t=" + std::to_string(t));
    s.betas_[t] = b;
    s.alphas_[t] = 1.0 - b;
    s.alpha_bars_[t] = s.alpha_bars_[t - 1] * s.alphas_[t];
    const double num = 1.0 - s.alpha_bars_[t - 1];
    s.posterior_[t] = num == 0.0 ? 0.0 : num / (1.0 - s.alpha_bars_[t]) * b;
  }
  return s;
}

void Schedule::check_step(std::size_t t) const {
  if (t < 1 || t > steps()) {
    throw InvalidArgument("timestep " + std::to_string(t) + " outside 1.." + std::to_string(steps()));
  }
}

double Schedule::beta(std::size_t t) const {
  check_step(t);
  return betas_[t];
}

double Schedule::alpha(std::size_t t) const {
  check_step(t);
  return alphas_[t];
}

double Schedule::alpha_bar(std::size_t t) const {
  if (t > steps()) throw InvalidArgument("timestep " + std::to_string(t) + " outside 0.." + std::to_string(steps()));
  return alpha_bars_[t];
}

double Schedule::posterior_variance(std::size_t t) const {
  check_step(t);
  return posterior_[t];
}

Schedule linear_schedule(std::size_t steps, double beta_start, double beta_end) {
  if (steps < 1) throw InvalidArgument("linear_schedule: need at least one step");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw InvalidArgument("linear_schedule: require 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    const double frac = steps == 1 ? 0.0 : static_cast<double>(i) / static_cast<double>(steps - 1);
    betas[i] = beta_start + (beta_end - beta_start) * frac;
  }
  betas.back() = beta_end;
  return Schedule::from_betas(std::move(betas));
}

Schedule respace(const Schedule& base, std::span<const std::size_t> timesteps) {
  std::vector<double> betas;
  std::size_t prev = 0;
  for (auto t : timesteps) {
    if (t <= prev || t > base.steps()) throw InvalidArgument("respace: timesteps must ascend within 1..T");
    betas.push_back(1.0 - base.alpha_bar(t) / base.alpha_bar(prev));
    prev = t;
  }
  return Schedule::from_betas(std::move(betas));
}

std::vector<std::size_t> sampling_timesteps(std::size_t total_steps, std::size_t count) {
  if (count < 1 || count > total_steps) {
    throw InvalidArgument("sampling steps " + std::to_string(count) + " outside 1.." + std::to_string(total_steps));
  }
  std::vector<std::size_t> ts;
  ts.reserve(count);
  for (std::size_t k = count; k >= 1; --k) {
    // round(k * T / count) in integer arithmetic
    ts.push_back((2 * k * total_steps + count) / (2 * count));
  }
  return ts;
}

namespace {

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
}

// ca * a + cb * b, untracked.
Tensor combine(const char* op, double ca, const Tensor& a, double cb, const Tensor& b) {
  require_same(op, a, b);
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = ca * x[i] + cb * y[i];
  detail::check_finite(op, out);
  return Tensor(a.shape(), std::move(out));
}

}  // namespace

Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const Schedule& sched) {
  if (t < 1) throw InvalidArgument("q_sample: timestep 0 is not a diffusion step");
  const double ab = sched.alpha_bar(t);
  return combine("q_sample", std::sqrt(ab), x0, std::sqrt(1.0 - ab), eps);
}

Tensor predict_x0(const Tensor& x_t, std::size_t t, const Tensor& eps_hat, const Schedule& sched) {
  const double ab = sched.alpha_bar(t);
  require_same("predict_x0", x_t, eps_hat);
  const double s = std::sqrt(ab), c = std::sqrt(1.0 - ab);
  auto x = x_t.data(), e = eps_hat.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x[i] - c * e[i]) / s;
  detail::check_finite("predict_x0", out);
  return Tensor(x_t.shape(), std::move(out));
}

Tensor clip_denoised_eps(const Tensor& x_t, std::size_t t, const Tensor& eps_hat, const Schedule& sched,
                         double bound) {
  if (!(bound > 0.0)) throw InvalidArgument("clip_denoised_eps: bound must be positive");
  const double ab = sched.alpha_bar(t);
  require_same("clip_denoised_eps", x_t, eps_hat);
  const double s = std::sqrt(ab), c = std::sqrt(1.0 - ab);
  if (c == 0.0) return eps_hat;  // t = 0: nothing to estimate
  auto x = x_t.data(), e = eps_hat.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x0 = std::clamp((x[i] - c * e[i]) / s, -bound, bound);
    out[i] = (x[i] - s * x0) / c;
  }
  detail::check_finite("clip_denoised_eps", out);
  return Tensor(x_t.shape(), std::move(out));
}

Tensor mu_theta(const Tensor& x_t, std::size_t t, const Tensor& eps_hat, const Schedule& sched) {
  const double a = sched.alpha(t), ab = sched.alpha_bar(t);
  require_same("mu_theta", x_t, eps_hat);
  const double inv = 1.0 / std::sqrt(a);
  const double coef = ab < 1.0 ? (1.0 - a) / std::sqrt(1.0 - ab) : 0.0;
  auto x = x_t.data(), e = eps_hat.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = inv * (x[i] - coef * e[i]);
  detail::check_finite("mu_theta", out);
  return Tensor(x_t.shape(), std::move(out));
}

Tensor ddpm_step(const Tensor& x_t, std::size_t t, const Tensor& eps_hat, const Schedule& sched, Rng& rng,
                 ReverseVariance variance) {
  Tensor mean = mu_theta(x_t, t, eps_hat, sched);
  if (t == 1) return mean;
  const double var = variance == ReverseVariance::beta ? sched.beta(t) : sched.posterior_variance(t);
  const double sigma = std::sqrt(var);
  auto m = mean.mutable_data();
  for (auto& v : m) v += sigma * rng.normal();
  return mean;
}

Tensor ddim_step(const Tensor& x_t, std::size_t t, std::size_t t_next, const Tensor& eps_hat,
                 const Schedule& sched) {
  if (!(t_next < t && t <= sched.steps())) {
    throw InvalidArgument("ddim_step: need 0 <= t_next < t <= T, got t=" + std::to_string(t) +
                          " t_next=" + std::to_string(t_next));
  }
  Tensor x0 = predict_x0(x_t, t, eps_hat, sched);
  const double ab_next = sched.alpha_bar(t_next);
  if (ab_next == 1.0) return x0;
  return combine("ddim_step", std::sqrt(ab_next), x0, std::sqrt(1.0 - ab_next), eps_hat);
}

Tensor simple_loss(const Tensor& eps, const Tensor& eps_hat) { return ops::mse(eps_hat, eps); }

Tensor gaussian_oracle_eps(const Tensor& x_t, std::size_t t, const GaussianDataSpec& spec,
                           const Schedule& sched) {
  if (!(spec.sigma0 > 0.0)) throw InvalidArgument("gaussian_oracle_eps: sigma0 must be positive");
  const double ab = sched.alpha_bar(t);
  const double coef = std::sqrt(1.0 - ab) / (ab * spec.sigma0 * spec.sigma0 + 1.0 - ab);
  const double center = std::sqrt(ab) * spec.mu0;
  auto x = x_t.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = coef * (x[i] - center);
  return Tensor(x_t.shape(), std::move(out));
}

}  // namespace dualfusion
