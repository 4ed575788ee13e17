#include "dualfusion/optim.hpp"

#include <algorithm>
#include <cmath>

#include "dualfusion/errors.hpp"

namespace dualfusion {

AdamW::AdamW(const ParameterSet& params, AdamWOptions options) : options_(options) {
  if (!(options.learning_rate > 0.0)) throw InvalidArgument("AdamW: learning rate must be positive");
  for (const auto& [name, t] : params) {
    names_.push_back(name);
    m_.emplace_back(t.numel(), 0.0);
    v_.emplace_back(t.numel(), 0.0);
  }
}

void AdamW::step(ParameterSet& params) {
  if (params.size() != names_.size()) throw InvalidArgument("AdamW: parameter set changed size");
  ++step_;
  const auto& o = options_;
  const double bc1 = 1.0 - std::pow(o.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(o.beta2, static_cast<double>(step_));
  const double decay = 1.0 - o.learning_rate * o.weight_decay;
  std::size_t i = 0;
  for (auto& [name, t] : params) {
    if (name != names_[i] || t.numel() != m_[i].size()) {
      throw InvalidArgument("AdamW: parameter '" + name + "' does not match optimizer slot '" + names_[i] + "'");
    }
    if (!t.has_grad()) throw InvalidArgument("AdamW: missing gradient for '" + name + "'");
    auto p = t.mutable_data();
    auto g = t.mutable_grad();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      v[k] = o.beta2 * v[k] + (1.0 - o.beta2) * g[k] * g[k];
      const double update = (m[k] / bc1) / (std::sqrt(v[k] / bc2) + o.eps);
      p[k] = p[k] * decay - o.learning_rate * update;
    }
    ++i;
  }
}

ParameterSet AdamW::state() const {
  ParameterSet out;
  for (std::size_t i = 0; i < names_.size(); ++i) {
    out.add(names_[i] + ".m", Tensor({m_[i].size()}, m_[i]));
    out.add(names_[i] + ".v", Tensor({v_[i].size()}, v_[i]));
  }
  return out;
}

void AdamW::load_state(const ParameterSet& state, std::uint64_t steps) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    const Tensor& m = state.get(names_[i] + ".m");
    const Tensor& v = state.get(names_[i] + ".v");
    if (m.numel() != m_[i].size() || v.numel() != v_[i].size()) {
      throw InvalidArgument("AdamW: state shape mismatch for '" + names_[i] + "'");
    }
    m_[i].assign(m.data().begin(), m.data().end());
    v_[i].assign(v.data().begin(), v.data().end());
  }
  step_ = steps;
}

Ema::Ema(const ParameterSet& live, double decay) : shadow_(live.clone()), decay_(decay) {
  if (!(decay >= 0.0 && decay < 1.0)) throw InvalidArgument("EMA decay must lie in [0, 1)");
}

double Ema::effective_decay() const {
  if (!warmup_) return decay_;
  const double n = static_cast<double>(updates_);
  return std::min(decay_, (1.0 + n) / (10.0 + n));
}

void Ema::update(const ParameterSet& live) { update(live, effective_decay()); }

void Ema::update(const ParameterSet& live, double decay) {
  if (live.size() != shadow_.size()) throw InvalidArgument("EMA: live parameter count changed");
  auto it = shadow_.begin();
  for (const auto& [name, t] : live) {
    if (it->name != name || it->tensor.shape() != t.shape()) {
      throw InvalidArgument("EMA: shape drift at '" + name + "'");
    }
    auto s = it->tensor.mutable_data();
    auto l = t.data();
    if (decay == 0.0) {
      std::copy(l.begin(), l.end(), s.begin());
    } else {
      // Incremental form keeps a shadow equal to the live value fixed exactly.
      for (std::size_t k = 0; k < s.size(); ++k) s[k] += (1.0 - decay) * (l[k] - s[k]);
    }
    ++it;
  }
  ++updates_;
}

}  // namespace dualfusion
