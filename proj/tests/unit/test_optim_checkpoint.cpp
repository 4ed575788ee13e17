#include <cmath>
#include <filesystem>

#include "doctest.h"
#include "dualfusion/checkpoint.hpp"
#include "dualfusion/optim.hpp"

using namespace dualfusion;

namespace {

ParameterSet scalar_param(double value, double grad) {
  ParameterSet set;
  Tensor p({1}, value);
  p.set_requires_grad();
  p.mutable_grad()[0] = grad;
  set.add("p", p);
  return set;
}

}  // namespace

TEST_CASE("AdamW") {
  SUBCASE("zero gradient and zero decay leave parameters unchanged") {
    ParameterSet set = scalar_param(0.5, 0.0);
    AdamW opt(set, {0.1, 0.9, 0.999, 1e-8, 0.0});
    opt.step(set);
    CHECK(set.get("p").item() == 0.5);
  }
  SUBCASE("one step with constant gradient, hand evaluation") {
    // m = 0.1, v = 0.001; bias-corrected both give 1.0; p = 1 - 0.1 * 1 / (1 + 1e-8)
    ParameterSet set = scalar_param(1.0, 1.0);
    AdamW opt(set, {0.1, 0.9, 0.999, 1e-8, 0.0});
    opt.step(set);
    CHECK(set.get("p").item() == doctest::Approx(0.9000000009999999).epsilon(1e-15));
    CHECK(opt.steps() == 1);
  }
  SUBCASE("decay alone shrinks by (1 - lr * wd)") {
    ParameterSet set = scalar_param(2.0, 0.0);
    AdamW opt(set, {0.1, 0.9, 0.999, 1e-8, 0.5});
    opt.step(set);
    CHECK(set.get("p").item() == doctest::Approx(2.0 * (1.0 - 0.05)).epsilon(1e-15));
  }
  SUBCASE("state round trip continues identically") {
    ParameterSet a = scalar_param(1.0, 0.3), b = scalar_param(1.0, 0.3);
    AdamW oa(a, {}), ob(b, {});
    oa.step(a);
    ob.step(b);
    AdamW oc(b, {});
    oc.load_state(ob.state(), ob.steps());
    a.get("p").mutable_grad()[0] = -0.7;
    b.get("p").mutable_grad()[0] = -0.7;
    oa.step(a);
    oc.step(b);
    CHECK(a.get("p").item() == b.get("p").item());
  }
  SUBCASE("missing gradient is an error") {
    ParameterSet set;
    set.add("q", Tensor({1}, 1.0).set_requires_grad());
    AdamW opt(set, {});
    CHECK_THROWS(opt.step(set));
  }
}

TEST_CASE("EMA") {
  ParameterSet live;
  live.add("w", Tensor({2}, {1.0, 1.0}));
  SUBCASE("three updates at decay 0.5 from zero reach 0.875") {
    Ema ema(live, 0.5);
    for (auto& v : ema.shadow().get("w").mutable_data()) v = 0.0;
    for (int i = 0; i < 3; ++i) ema.update(live, 0.5);
    CHECK(ema.shadow().get("w").at(0) == 0.875);
  }
  SUBCASE("fixed point and decay 0") {
    Ema ema(live, 0.9);
    ema.update(live);
    CHECK(ema.shadow().get("w").at(1) == 1.0);
    live.get("w").mutable_data()[1] = 3.25;
    ema.update(live, 0.0);
    CHECK(ema.shadow().get("w").at(1) == 3.25);
  }
  SUBCASE("warmup caps the early decay") {
    Ema ema(live, 0.9999);
    ema.set_warmup(true);
    CHECK(ema.effective_decay() == doctest::Approx(0.1));
    ema.set_updates(90);
    CHECK(ema.effective_decay() == doctest::Approx(91.0 / 100.0));
    ema.set_warmup(false);
    CHECK(ema.effective_decay() == 0.9999);
  }
}

TEST_CASE("checkpoint format") {
  Checkpoint ck;
  ck.config_text = "timesteps = 1000\n";
  ck.meta["iteration"] = "42";
  ck.add("a.weight", Tensor({2, 3}, {0.1, -2.0, 3.5, 1e-7, 0.0, -0.0}));
  ck.add("b", Tensor({1}, 7.0));
  SUBCASE("round trip is bitwise") {
    const auto bytes = serialize_checkpoint(ck);
    const Checkpoint back = deserialize_checkpoint(bytes);
    CHECK(serialize_checkpoint(back) == bytes);
    CHECK(back.config_text == ck.config_text);
    CHECK(back.meta_u64("iteration") == 42);
    CHECK(back.tensor("a.weight").at(0) == static_cast<double>(0.1f));
    const auto path = std::filesystem::temp_directory_path() / "dualfusion_ckpt_test.dcl";
    save_checkpoint(path, ck);
    CHECK(serialize_checkpoint(load_checkpoint(path)) == bytes);
    std::filesystem::remove(path);
  }
  SUBCASE("layout: magic, version, little-endian lengths") {
    const auto bytes = serialize_checkpoint(ck);
    CHECK(std::string(bytes.begin(), bytes.begin() + 6) == "DCLDM1");
    CHECK(bytes[6] == 1);
    CHECK(bytes[7] == 0);
  }
  SUBCASE("corruption is reported by kind") {
    auto bytes = serialize_checkpoint(ck);
    auto kind_of = [](std::vector<std::uint8_t> b) {
      try {
        deserialize_checkpoint(b);
      } catch (const CheckpointError& e) {
        return e.kind();
      }
      return CheckpointError::Kind::io;
    };
    auto bad = bytes;
    bad[0] = 'X';
    CHECK(kind_of(bad) == CheckpointError::Kind::bad_magic);
    auto ver = bytes;
    ver[6] = 9;
    CHECK(kind_of(ver) == CheckpointError::Kind::version_mismatch);
    auto cut = bytes;
    cut.resize(cut.size() - 3);
    CHECK(kind_of(cut) == CheckpointError::Kind::truncated);
    auto extra = bytes;
    extra.push_back(0);
    CHECK(kind_of(extra) == CheckpointError::Kind::truncated);
    CHECK_THROWS_AS(ck.add("b", Tensor({1})), CheckpointError);
    CHECK_THROWS_AS(ck.tensor("missing"), CheckpointError);
  }
}
