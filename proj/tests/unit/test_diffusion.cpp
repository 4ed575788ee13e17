#include <cmath>
#include <numeric>

#include "doctest.h"
#include "dualfusion/diffusion.hpp"
#include "dualfusion/errors.hpp"
#include "gradcheck.hpp"

using namespace dualfusion;

namespace {

struct Moments {
  double mean = 0.0, var = 0.0;
};

Moments moments(std::span<const double> xs) {
  Moments m;
  for (double x : xs) m.mean += x;
  m.mean /= static_cast<double>(xs.size());
  for (double x : xs) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(xs.size() - 1);
  return m;
}

}  // namespace

TEST_CASE("linear schedule") {
  SUBCASE("T=1000 terminal alpha_bar matches an independent cumulative product") {
    // numpy: prod(1 - linspace(1e-4, 0.02, 1000))
    const Schedule s = linear_schedule(1000);
    CHECK(s.alpha_bar(1000) == doctest::Approx(4.035829765375676e-05).epsilon(1e-10));
    CHECK(s.beta(1) == 1e-4);
    CHECK(s.beta(1000) == doctest::Approx(0.02).epsilon(1e-14));
    CHECK(s.alpha_bar(0) == 1.0);
  }
  SUBCASE("T=1") {
    const Schedule s = linear_schedule(1, 0.1, 0.1);
    CHECK(s.beta(1) == 0.1);
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.posterior_variance(1) == 0.0);
  }
  SUBCASE("T=4 hand products") {
    const Schedule s = linear_schedule(4, 0.1, 0.4);
    const double betas[] = {0.1, 0.2, 0.3, 0.4}, abar[] = {0.9, 0.72, 0.504, 0.3024};
    for (std::size_t t = 1; t <= 4; ++t) {
      CHECK(s.beta(t) == doctest::Approx(betas[t - 1]).epsilon(1e-14));
      CHECK(s.alpha_bar(t) == doctest::Approx(abar[t - 1]).epsilon(1e-14));
    }
  }
  SUBCASE("invariants") {
    const Schedule s = linear_schedule(50);
    for (std::size_t t = 1; t <= 50; ++t) {
      CHECK(s.alpha(t) == 1.0 - s.beta(t));
      CHECK(s.alpha_bar(t) < s.alpha_bar(t - 1));
      CHECK(s.posterior_variance(t) <= s.beta(t));
      if (t > 1) CHECK(s.beta(t) > s.beta(t - 1));
    }
    CHECK(s.alpha_bar(50) == doctest::Approx(0.602951597329715).epsilon(1e-12));
  }
  SUBCASE("invalid input") {
    CHECK_THROWS_AS(linear_schedule(0), InvalidArgument);
    CHECK_THROWS_AS(linear_schedule(10, 0.02, 1e-4), InvalidArgument);
    CHECK_THROWS_AS(Schedule::from_betas({0.1, 1.0}), InvalidArgument);
    CHECK_THROWS_AS(linear_schedule(4).beta(5), InvalidArgument);
  }
}

TEST_CASE("sampling timesteps and respacing") {
  const auto ts = sampling_timesteps(1000, 4);
  CHECK(ts == std::vector<std::size_t>{1000, 750, 500, 250});
  CHECK(sampling_timesteps(1000, 1000).front() == 1000);
  CHECK(sampling_timesteps(1000, 1000).back() == 1);
  CHECK(sampling_timesteps(1000, 250).size() == 250);
  const Schedule base = linear_schedule(1000);
  std::vector<std::size_t> asc(ts.rbegin(), ts.rend());
  const Schedule r = respace(base, asc);
  CHECK(r.steps() == 4);
  for (std::size_t i = 1; i <= 4; ++i) CHECK(r.alpha_bar(i) == doctest::Approx(base.alpha_bar(asc[i - 1])).epsilon(1e-12));
}

TEST_CASE("forward process") {
  const Schedule s = linear_schedule(4, 0.1, 0.4);
  const Tensor x0({3}, {1.0, -2.0, 0.5});
  SUBCASE("zero noise scales by sqrt(alpha_bar)") {
    const Tensor xt = q_sample(x0, 3, Tensor({3}, 0.0), s);
    for (std::size_t i = 0; i < 3; ++i) CHECK(xt.at(i) == std::sqrt(0.504) * x0.at(i));
  }
  SUBCASE("alpha_bar = 1 passes x0 through") {
    const Schedule id = Schedule::from_betas({0.0});
    const Tensor xt = q_sample(x0, 1, Tensor({3}, 0.7), id);
    for (std::size_t i = 0; i < 3; ++i) CHECK(xt.at(i) == x0.at(i));
  }
  SUBCASE("Monte-Carlo moments") {
    const std::size_t n = 10000;
    Rng rng(5);
    const Tensor xs({n}, 1.5);
    const Tensor xt = q_sample(xs, 2, Tensor::randn({n}, rng), s);
    const Moments m = moments(xt.data());
    const double mean = std::sqrt(0.72) * 1.5, var = 1.0 - 0.72;
    CHECK(std::abs(m.mean - mean) < 3.0 * std::sqrt(var / n));
    CHECK(std::abs(m.var - var) < 3.0 * var * std::sqrt(2.0 / (n - 1)));
  }
  SUBCASE("t = 0 rejected") { CHECK_THROWS_AS(q_sample(x0, 0, x0, s), InvalidArgument); }
}

TEST_CASE("reverse-process algebra") {
  SUBCASE("predict_x0 inverts q_sample for every t (T=50)") {
    const Schedule s = linear_schedule(50);
    Rng rng(11);
    double worst = 0.0;
    for (std::size_t t = 1; t <= 50; ++t) {
      const Tensor x0 = Tensor::randn({64}, rng), eps = Tensor::randn({64}, rng);
      const Tensor back = predict_x0(q_sample(x0, t, eps, s), t, eps, s);
      for (std::size_t i = 0; i < 64; ++i) worst = std::max(worst, std::abs(back.at(i) - x0.at(i)));
    }
    CHECK(worst < 1e-8);
  }
  const Schedule s = linear_schedule(4, 0.1, 0.4);
  const Tensor xt({2}, {1.0, -0.5});
  SUBCASE("zero noise estimates") {
    const Tensor z({2}, 0.0);
    CHECK(predict_x0(xt, 2, z, s).at(1) == doctest::Approx(-0.5 / std::sqrt(0.72)).epsilon(1e-15));
    CHECK(mu_theta(xt, 2, z, s).at(0) == doctest::Approx(1.0 / std::sqrt(0.8)).epsilon(1e-15));
  }
  SUBCASE("mu_theta hand value at the T=4 schedule") {
    // 1/sqrt(0.8) * (1 - 0.2 / sqrt(0.28) * 0.5)
    CHECK(mu_theta(Tensor({1}, 1.0), 2, Tensor({1}, 0.5), s).item() ==
          doctest::Approx(0.9067454250677657).epsilon(1e-14));
  }
  SUBCASE("mu_theta with alpha = 1 is the identity") {
    const Schedule id = Schedule::from_betas({0.0, 0.1});
    CHECK(mu_theta(xt, 1, Tensor({2}, 0.3), id).at(1) == -0.5);
  }
  SUBCASE("last DDPM step adds no noise under either variance") {
    for (auto var : {ReverseVariance::beta, ReverseVariance::beta_tilde}) {
      Rng rng(1);
      const Tensor eps({2}, {0.2, 0.1});
      const Tensor a = ddpm_step(xt, 1, eps, s, rng, var), b = mu_theta(xt, 1, eps, s);
      CHECK(a.at(0) == b.at(0));
      CHECK(rng.counter() == 0);
    }
  }
  SUBCASE("DDIM to t=0 returns predict_x0 exactly; deterministic") {
    const Tensor eps({2}, {0.2, 0.1});
    const Tensor a = ddim_step(xt, 3, 0, eps, s), b = predict_x0(xt, 3, eps, s);
    CHECK(a.at(0) == b.at(0));
    CHECK(a.at(1) == b.at(1));
    const Tensor c = ddim_step(xt, 3, 1, eps, s), d = ddim_step(xt, 3, 1, eps, s);
    CHECK(c.at(0) == d.at(0));
    CHECK_THROWS_AS(ddim_step(xt, 2, 3, eps, s), InvalidArgument);
  }
  SUBCASE("clipped noise estimate") {
    const Schedule big = linear_schedule(1000);
    Rng rng(4);
    const Tensor x0({3}, {0.5, -0.9, 0.1}), eps = Tensor::randn({3}, rng);
    const Tensor x = q_sample(x0, 700, eps, big);
    // in range: unchanged up to rounding
    const Tensor same = clip_denoised_eps(x, 700, eps, big, 1.0);
    for (std::size_t i = 0; i < 3; ++i) CHECK(same.at(i) == doctest::Approx(eps.at(i)).epsilon(1e-9));
    // out of range: the implied x0 lands exactly on the bound
    const Tensor off({3}, {-3.0, 2.0, 0.0});
    const Tensor fixed = predict_x0(x, 700, clip_denoised_eps(x, 700, off, big, 1.0), big);
    const Tensor raw = predict_x0(x, 700, off, big);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(fixed.at(i) == doctest::Approx(std::clamp(raw.at(i), -1.0, 1.0)).epsilon(1e-9));
    }
    CHECK_THROWS_AS(clip_denoised_eps(x, 700, eps, big, 0.0), InvalidArgument);
  }
}

TEST_CASE("simple loss") {
  CHECK(simple_loss(Tensor({2}, 0.0), Tensor({2}, 1.0)).item() == 1.0);
  CHECK(simple_loss(Tensor({2}, {0.3, 0.4}), Tensor({2}, {0.3, 0.4})).item() == 0.0);
  const Tensor eps({4}, {0.1, -0.2, 0.3, 0.5});
  Tensor hat({4}, {0.4, 0.2, -0.1, 0.5});
  hat.set_requires_grad();
  backward(simple_loss(eps, hat));
  const auto g = hat.grad();
  for (std::size_t i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(2.0 * (hat.at(i) - eps.at(i)) / 4.0));
  auto r = testing_support::gradcheck(
      [&](const std::vector<Tensor>& p) { return simple_loss(eps, p[0]); }, {Tensor({4}, {0.4, 0.2, -0.1, 0.5})});
  CHECK(r.relative_error < 1e-6);
}

TEST_CASE("gaussian posterior-mean noise") {
  const Schedule s = linear_schedule(1000);
  const GaussianDataSpec spec{2.0, 0.5};
  SUBCASE("limits") {
    const std::size_t t = 300;
    const double ab = s.alpha_bar(t);
    const Tensor x({1}, std::sqrt(ab) * 2.0);
    CHECK(gaussian_oracle_eps(x, t, spec, s).item() == doctest::Approx(0.0).epsilon(1e-15));
    const Tensor y({1}, 0.7);
    const double point = (0.7 - std::sqrt(ab) * 2.0) / std::sqrt(1.0 - ab);
    CHECK(gaussian_oracle_eps(y, t, {2.0, 1e-9}, s).item() == doctest::Approx(point).epsilon(1e-9));
  }
  SUBCASE("least-squares regression of eps on x_t recovers the coefficients") {
    const std::size_t n = 100000;
    for (std::size_t t : {50, 400, 900}) {
      Rng rng(t);
      const double ab = s.alpha_bar(t);
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const double x0 = 2.0 + 0.5 * rng.normal(), eps = rng.normal();
        const double xt = std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps;
        sx += xt, sy += eps, sxx += xt * xt, sxy += xt * eps;
      }
      const double slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
      const double icept = (sy - slope * sx) / n;
      // Probe the oracle at two points to read off its affine coefficients.
      const double e0 = gaussian_oracle_eps(Tensor({1}, 0.0), t, spec, s).item();
      const double e1 = gaussian_oracle_eps(Tensor({1}, 1.0), t, spec, s).item();
      CHECK(slope == doctest::Approx(e1 - e0).epsilon(0.02));
      CHECK(icept == doctest::Approx(e0).epsilon(0.02));
    }
  }
}

namespace {

Moments transport(bool ddim, ReverseVariance variance, std::size_t steps) {
  const Schedule base = linear_schedule(1000);
  const GaussianDataSpec spec{2.0, 0.5};
  const std::size_t n = 10000;
  Rng rng(2024);
  Tensor x = Tensor::randn({n}, rng);
  if (ddim) {
    const auto ts = sampling_timesteps(1000, steps);
    for (std::size_t i = 0; i < ts.size(); ++i) {
      const std::size_t next = i + 1 < ts.size() ? ts[i + 1] : 0;
      x = ddim_step(x, ts[i], next, gaussian_oracle_eps(x, ts[i], spec, base), base);
    }
  } else {
    for (std::size_t t = 1000; t >= 1; --t) x = ddpm_step(x, t, gaussian_oracle_eps(x, t, spec, base), base, rng, variance);
  }
  return moments(x.data());
}

}  // namespace

TEST_CASE("oracle transport reproduces the data distribution") {
  const double se = std::sqrt(0.25 / 10000.0);
  for (auto var : {ReverseVariance::beta, ReverseVariance::beta_tilde}) {
    const Moments m = transport(false, var, 1000);
    CHECK(std::abs(m.mean - 2.0) < 3.0 * se);
    CHECK(std::abs(m.var - 0.25) < 0.025);
  }
  // A 50-step deterministic chain is a linear map of x_T, so its output law is
  // known exactly: propagate (mean, var) of N(0,1) through the affine steps.
  // The discretisation shrinks the variance to about 0.222 -- outside 10% of
  // 0.25 -- so compare against the propagated moments instead.
  const auto ts = sampling_timesteps(1000, 50);
  const Schedule base = linear_schedule(1000);
  double em = 0.0, ev = 1.0;
  for (std::size_t i = 0; i < ts.size(); ++i) {
    const double at = base.alpha_bar(ts[i]);
    const double an = i + 1 < ts.size() ? base.alpha_bar(ts[i + 1]) : 1.0;
    const double k = std::sqrt(1.0 - at) / (at * 0.25 + 1.0 - at);
    const double ca = std::sqrt(an / at) * (1.0 - std::sqrt(1.0 - at) * k) + std::sqrt(1.0 - an) * k;
    const double cb = (std::sqrt(an / at) * std::sqrt(1.0 - at) - std::sqrt(1.0 - an)) * k * std::sqrt(at) * 2.0;
    em = ca * em + cb;
    ev = ca * ca * ev;
  }
  CHECK(ev == doctest::Approx(0.2222204803344693).epsilon(1e-6));  // numpy, same recursion
  const Moments m = transport(true, ReverseVariance::beta_tilde, 50);
  CHECK(std::abs(m.mean - em) < 3.0 * std::sqrt(ev / 10000.0));
  CHECK(std::abs(m.var - ev) < 3.0 * ev * std::sqrt(2.0 / 9999.0));
}
