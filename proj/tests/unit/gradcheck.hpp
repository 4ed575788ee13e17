#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dualfusion/ops.hpp"
#include "dualfusion/rng.hpp"

namespace testing_support {

using dualfusion::Tensor;

struct GradReport {
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  double analytic_norm = 0.0;
  std::size_t checked = 0;
};

// Central differences with step h on every element of every leaf, compared
// against reverse-mode gradients of the scalar `f`.
inline GradReport gradcheck(const std::function<Tensor(const std::vector<Tensor>&)>& f, std::vector<Tensor> leaves,
                            double h = 1e-5) {
  for (auto& l : leaves) {
    l.set_requires_grad(true);
    l.zero_grad();
  }
  dualfusion::backward(f(leaves));
  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  GradReport report;
  dualfusion::NoGradGuard no_grad;
  for (auto& l : leaves) {
    const auto analytic = l.grad();
    auto values = l.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double keep = values[i];
      values[i] = keep + h;
      const double up = f(leaves).item();
      values[i] = keep - h;
      const double down = f(leaves).item();
      values[i] = keep;
      const double numeric = (up - down) / (2.0 * h);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
      ++report.checked;
    }
  }
  const double denom = std::max(std::sqrt(std::max(a2, n2)), 1e-300);
  report.relative_error = std::sqrt(diff2) / denom;
  report.analytic_norm = std::sqrt(a2);
  return report;
}

// Scalar probe sum(out * weights) so every output element contributes.
inline Tensor probe(const Tensor& out, const Tensor& weights) {
  return dualfusion::ops::sum(dualfusion::ops::mul(out, weights));
}

}  // namespace testing_support
