#pragma once

#include <cstdint>
#include <vector>

#include "dualfusion/parameters.hpp"

namespace dualfusion {

struct AdamWOptions {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

// Adam with decoupled weight decay:
//   p <- p - lr * wd * p
//   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
//   p <- p - lr * (m / (1 - b1^k)) / (sqrt(v / (1 - b2^k)) + eps)
class AdamW {
 public:
  AdamW(const ParameterSet& params, AdamWOptions options);

  // Every tensor in `params` must hold a gradient; order and shapes must
  // match the set the optimizer was created for.
  void step(ParameterSet& params);

  std::uint64_t steps() const { return step_; }
  const AdamWOptions& options() const { return options_; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

  // Moment accumulators as tensors named "<param>.m" / "<param>.v".
  ParameterSet state() const;
  void load_state(const ParameterSet& state, std::uint64_t steps);

 private:
  AdamWOptions options_;
  std::vector<std::string> names_;
  std::vector<std::vector<double>> m_, v_;
  std::uint64_t step_ = 0;
};

// Exponential moving average of trainable tensors. The shadow starts as a
// copy of the live values and never feeds back into training.
class Ema {
 public:
  Ema(const ParameterSet& live, double decay);

  // shadow <- decay * shadow + (1 - decay) * live
  void update(const ParameterSet& live, double decay);
  // Uses the configured decay, capped by (1 + k) / (10 + k) after k prior
  // updates when warmup is enabled.
  void update(const ParameterSet& live);

  double decay() const { return decay_; }
  void set_warmup(bool on) { warmup_ = on; }
  std::uint64_t updates() const { return updates_; }
  void set_updates(std::uint64_t n) { updates_ = n; }
  double effective_decay() const;

  const ParameterSet& shadow() const { return shadow_; }
  ParameterSet& shadow() { return shadow_; }

 private:
  ParameterSet shadow_;
  double decay_;
  bool warmup_ = false;
  std::uint64_t updates_ = 0;
};

}  // namespace dualfusion
