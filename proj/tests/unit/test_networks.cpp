#include <cmath>

#include "doctest.h"
#include "dualfusion/errors.hpp"
#include "dualfusion/model.hpp"
#include "dualfusion/optim.hpp"
#include "gradcheck.hpp"
#include "tiny_model.hpp"

using namespace dualfusion;
using testing_support::tiny_config;

TEST_CASE("timestep embedding") {
  const auto zero = timestep_embedding(0.0, 8);
  for (std::size_t i = 0; i < 8; i += 2) {
    CHECK(zero[i] == 0.0);
    CHECK(zero[i + 1] == 1.0);
  }
  CHECK(timestep_embedding(17.0, 16) == timestep_embedding(17.0, 16));
  CHECK_THROWS_AS(timestep_embedding(1.0, 7), InvalidArgument);
  // every t in 1..1000 gets its own vector
  std::vector<std::vector<double>> all;
  for (int t = 1; t <= 1000; ++t) all.push_back(timestep_embedding(t, 8));
  double min_d2 = 1e300;
  for (std::size_t a = 0; a < all.size(); ++a) {
    for (std::size_t b = a + 1; b < all.size(); ++b) {
      double d2 = 0;
      for (std::size_t i = 0; i < 8; ++i) d2 += (all[a][i] - all[b][i]) * (all[a][i] - all[b][i]);
      min_d2 = std::min(min_d2, d2);
    }
  }
  CHECK(min_d2 > 0.0);
}

TEST_CASE("adaLN-Zero block") {
  ParameterSet set;
  Rng rng(3);
  auto b = ParamBuilder::creating(set, rng);
  const AdaLnZeroBlock block(b, "blk", 4, 6, 2);
  Rng data(8);
  const Tensor h = Tensor::randn({2, 4, 3, 3}, data), e = Tensor::randn({2, 6}, data);
  SUBCASE("identity at init") {
    const Tensor out = block(h, e);
    CHECK(std::equal(out.data().begin(), out.data().end(), h.data().begin()));
  }
  SUBCASE("zero embedding leaves only the head biases") {
    testing_support::perturb(set, 1);
    const Tensor zero_e({2, 6}, 0.0);
    const Tensor out = block(h, zero_e);
    // Rebuild the expected value from the head biases directly.
    const auto& sh = set.get("blk.shift.bias");
    const auto& sc = set.get("blk.scale.bias");
    const auto& g = set.get("blk.gate.bias");
    Tensor shift = ops::stack(std::vector<Tensor>{sh, sh}), scale = ops::stack(std::vector<Tensor>{sc, sc});
    Tensor gate = ops::stack(std::vector<Tensor>{g, g});
    Tensor u = ops::add_channels(ops::mul_channels(ops::normalize_channels(h, 2), ops::add_scalar(scale, 1.0)), shift);
    ConvLayer c1{set.get("blk.conv1.weight"), set.get("blk.conv1.bias")};
    ConvLayer c2{set.get("blk.conv2.weight"), set.get("blk.conv2.bias")};
    Tensor expect = ops::add(h, ops::mul_channels(c2(ops::silu(c1(ops::silu(u)))), gate));
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(out.at(i) == doctest::Approx(expect.at(i)).epsilon(1e-13));
  }
  SUBCASE("gate head receives gradient at init and after one step") {
    const Tensor target = Tensor::randn({2, 4, 3, 3}, data);
    AdamW opt(set, {1e-2, 0.9, 0.999, 1e-8, 0.0});
    for (int step = 0; step < 2; ++step) {
      set.zero_grad();
      backward(ops::mse(block(h, e), target));
      double g2 = 0;
      for (double g : set.get("blk.gate.weight").grad()) g2 += g * g;
      CHECK(g2 > 0.0);
      opt.step(set);
    }
  }
}

TEST_CASE("denoiser contracts") {
  const ModelConfig cfg = tiny_config();
  Rng rng(5);
  ParameterSet params = DualModel::init_trainable(cfg, rng);
  const DualModel model(cfg, params);
  Rng data(6);
  const Tensor z = Tensor::randn({3, 3, 8, 8}, data), zr = Tensor::randn({3, 2, 8, 8}, data);
  const Tensor f = Tensor::randn({3, 8}, data);
  const std::vector<std::size_t> ts{1, 25, 50};
  const std::vector<ConditionMode> modes(3, ConditionMode::dual);
  SUBCASE("untrained output is exactly zero and shaped like z_t") {
    const Tensor eps = model.predict(z, zr, f, modes, ts);
    CHECK(eps.shape() == z.shape());
    for (double v : eps.data()) CHECK(v == 0.0);
  }
  SUBCASE("parameter budget of the gradient fixture") { CHECK(params.scalar_count() <= 5000); }
  SUBCASE("shape errors") {
    CHECK_THROWS_AS(model.predict(z, Tensor::randn({3, 3, 8, 8}, data), f, modes, ts), InvalidArgument);
    CHECK_THROWS_AS(model.predict(z, zr, Tensor::randn({3, 9}, data), modes, ts), InvalidArgument);
    CHECK_THROWS_AS(model.denoiser()(z, zr, f, std::vector<std::size_t>{1, 2}), InvalidArgument);
  }
  SUBCASE("style swap changes a perturbed model's output") {
    testing_support::perturb(params, 2);
    const Tensor a = model.predict(z, zr, f, modes, ts);
    const Tensor f2 = ops::stack(std::vector<Tensor>{ops::row(f, 1), ops::row(f, 0), ops::row(f, 2)});
    const Tensor b = model.predict(z, zr, f2, modes, ts);
    double d2 = 0;
    for (std::size_t i = 0; i < 3 * 8 * 8; ++i) d2 += (a.at(i) - b.at(i)) * (a.at(i) - b.at(i));
    CHECK(d2 > 0.0);
  }
  SUBCASE("style embedding with zeroed MLP equals the time embedding") {
    for (auto& [name, t] : params) {
      if (name.starts_with("denoiser.style_mlp")) std::fill(t.mutable_data().begin(), t.mutable_data().end(), 0.0);
    }
    const Tensor et = model.denoiser().time_embedding(ts);
    const Tensor e = model.denoiser().style_embedding(f, et);
    for (std::size_t i = 0; i < e.numel(); ++i) CHECK(e.at(i) == et.at(i));
    const Tensor nul = ops::stack(std::vector<Tensor>{model.null_style(), model.null_style(), model.null_style()});
    CHECK(model.denoiser().style_embedding(nul, et).shape() == et.shape());
  }
}

TEST_CASE("full denoiser loss matches finite differences") {
  const ModelConfig cfg = tiny_config();
  Rng rng(15);
  ParameterSet params = DualModel::init_trainable(cfg, rng);
  testing_support::perturb(params, 16);
  const DualModel model(cfg, params);
  const Schedule sched = cfg.schedule();
  Rng data(17);
  const Tensor z0 = Tensor::randn({3, 3, 8, 8}, data), eps = Tensor::randn({3, 3, 8, 8}, data);
  const Tensor f = Tensor::randn({3, 8}, data);
  const std::vector<std::size_t> ts{3, 20, 47};
  const std::vector<ConditionMode> modes{ConditionMode::dual, ConditionMode::content_only, ConditionMode::style_only};
  std::vector<Tensor> rows;
  for (std::size_t b = 0; b < 3; ++b) rows.push_back(q_sample(ops::row(z0, b), ts[b], ops::row(eps, b), sched));
  const Tensor zt = ops::stack(rows);

  std::vector<Tensor> leaves;
  for (auto& [name, t] : params) leaves.push_back(t);
  auto report = testing_support::gradcheck(
      [&](const std::vector<Tensor>&) {
        return simple_loss(eps, model.predict(zt, model.refine(z0), f, modes, ts));
      },
      leaves);
  MESSAGE("checked " << report.checked << " parameters, relative error " << report.relative_error);
  CHECK(report.checked <= 5000);
  CHECK(report.relative_error < 1e-4);
  CHECK(report.analytic_norm > 0.0);
}

TEST_CASE("style standardization") {
  // two rows: mean 2, population variance 1 in column 0; constant column 1
  const ParameterSet norm = style_normalizer(Tensor({2, 2}, {1.0, 5.0, 3.0, 5.0}));
  CHECK(norm.get("style_norm.shift").at(0) == 2.0);
  CHECK(norm.get("style_norm.shift").at(1) == 5.0);
  CHECK(norm.get("style_norm.scale").at(0) == doctest::Approx(1.0 / std::sqrt(1.0 + 1e-6)).epsilon(1e-14));
  CHECK(norm.get("style_norm.scale").at(1) == doctest::Approx(1e3).epsilon(1e-12));
  CHECK_THROWS_AS(style_normalizer(Tensor({1, 2})), InvalidArgument);

  // predicting from raw features with a standardizer equals predicting from
  // pre-standardized features without one
  const ModelConfig cfg = tiny_config();
  Rng rng(8);
  ParameterSet params = DualModel::init_trainable(cfg, rng);
  testing_support::perturb(params, 9);
  Rng data(10);
  const Tensor raw = Tensor::randn({4, 8}, data);
  ParameterSet with = params;
  with.merge(style_normalizer(raw));
  const DualModel plain(cfg, params), standardized(cfg, with);
  CHECK(standardized.has_style_norm());
  CHECK_FALSE(plain.has_style_norm());
  const auto& mu = with.get("style_norm.shift");
  const auto& k = with.get("style_norm.scale");
  Tensor pre({4, 8});
  for (std::size_t i = 0; i < 32; ++i) pre.mutable_data()[i] = (raw.at(i) - mu.at(i % 8)) * k.at(i % 8);
  const Tensor z = Tensor::randn({4, 3, 8, 8}, data), zr = Tensor::randn({4, 2, 8, 8}, data);
  const std::vector<std::size_t> ts{1, 10, 20, 40};
  const std::vector<ConditionMode> modes{ConditionMode::dual, ConditionMode::content_only, ConditionMode::style_only,
                                         ConditionMode::dual};
  const Tensor a = standardized.predict(z, zr, raw, modes, ts), b = plain.predict(z, zr, pre, modes, ts);
  for (std::size_t i = 0; i < a.numel(); ++i) CHECK(a.at(i) == b.at(i));
}
