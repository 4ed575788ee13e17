#include "dualfusion/errors.hpp"
#include "dualfusion/ops.hpp"

namespace dualfusion::ops {

namespace {

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
  }
}

void accumulate(detail::Node& target, const std::vector<double>& g, double factor) {
  if (!target.requires_grad) return;
  double* dst = target.grad_buffer();
  for (std::size_t i = 0; i < g.size(); ++i) dst[i] += factor * g[i];
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape("add", a, b);
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return detail::make_result("add", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    accumulate(*self.parents[0], self.grad, 1.0);
    accumulate(*self.parents[1], self.grad, 1.0);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape("sub", a, b);
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return detail::make_result("sub", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    accumulate(*self.parents[0], self.grad, 1.0);
    accumulate(*self.parents[1], self.grad, -1.0);
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape("mul", a, b);
  auto x = a.data(), y = b.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return detail::make_result("mul", a.shape(), std::move(out), {a, b}, [](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      double* d = pa.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * pb.data[i];
    }
    if (pb.requires_grad) {
      double* d = pb.grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * pa.data[i];
    }
  });
}

Tensor add_scalar(const Tensor& a, double b) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + b;
  return detail::make_result("add_scalar", a.shape(), std::move(out), {a},
                             [](detail::Node& self) { accumulate(*self.parents[0], self.grad, 1.0); });
}

Tensor scale(const Tensor& a, double s) {
  auto x = a.data();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
  return detail::make_result("scale", a.shape(), std::move(out), {a},
                             [s](detail::Node& self) { accumulate(*self.parents[0], self.grad, s); });
}

}  // namespace dualfusion::ops
