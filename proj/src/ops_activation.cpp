#include <cmath>

#include "dualfusion/errors.hpp"
#include "dualfusion/ops.hpp"

namespace dualfusion::ops {

Tensor silu(const Tensor& x) {
  auto in = x.data();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] / (1.0 + std::exp(-in[i]));
  return detail::make_result("silu", x.shape(), std::move(out), {x}, [](detail::Node& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    double* dx = px.grad_buffer();
    for (std::size_t i = 0; i < px.data.size(); ++i) {
      const double v = px.data[i];
      const double s = 1.0 / (1.0 + std::exp(-v));
      dx[i] += self.grad[i] * s * (1.0 + v * (1.0 - s));
    }
  });
}

Tensor normalize_channels(const Tensor& x, std::size_t groups, double eps) {
  if (x.rank() < 2) throw InvalidArgument("normalize_channels: needs [N,C,...], got " + shape_str(x.shape()));
  const std::size_t N = x.dim(0), C = x.dim(1);
  if (groups == 0 || C % groups != 0) {
    throw InvalidArgument("normalize_channels: " + std::to_string(C) + " channels not divisible into " +
                          std::to_string(groups) + " groups");
  }
  const std::size_t group_len = x.numel() / (N * groups);
  if (group_len < 2) throw InvalidArgument("normalize_channels: fewer than 2 elements per group");
  const std::size_t count = N * groups;
  std::vector<double> out(x.numel()), inv_std(count);
  auto in = x.data();
  const double n = static_cast<double>(group_len);
  for (std::size_t g = 0; g < count; ++g) {
    const double* v = in.data() + g * group_len;
    double s = 0.0;
    for (std::size_t i = 0; i < group_len; ++i) s += v[i];
    const double m = s / n;
    double q = 0.0;
    for (std::size_t i = 0; i < group_len; ++i) q += (v[i] - m) * (v[i] - m);
    const double r = 1.0 / std::sqrt(q / n + eps);
    inv_std[g] = r;
    double* o = out.data() + g * group_len;
    for (std::size_t i = 0; i < group_len; ++i) o[i] = (v[i] - m) * r;
  }
  auto normalized = out;
  return detail::make_result(
      "normalize_channels", x.shape(), std::move(out), {x},
      [count, group_len, n, inv_std = std::move(inv_std), y = std::move(normalized)](detail::Node& self) {
        auto& px = *self.parents[0];
        if (!px.requires_grad) return;
        double* dx = px.grad_buffer();
        for (std::size_t g = 0; g < count; ++g) {
          const double* dy = self.grad.data() + g * group_len;
          const double* yy = y.data() + g * group_len;
          double mean_dy = 0.0, mean_dyy = 0.0;
          for (std::size_t i = 0; i < group_len; ++i) {
            mean_dy += dy[i];
            mean_dyy += dy[i] * yy[i];
          }
          mean_dy /= n;
          mean_dyy /= n;
          double* d = dx + g * group_len;
          for (std::size_t i = 0; i < group_len; ++i) d[i] += inv_std[g] * (dy[i] - mean_dy - yy[i] * mean_dyy);
        }
      });
}

namespace {

std::size_t check_channel_operand(const char* op, const Tensor& x, const Tensor& s) {
  if (x.rank() < 2 || s.shape() != Shape{x.dim(0), x.dim(1)}) {
    throw InvalidArgument(std::string(op) + ": per-channel operand " + shape_str(s.shape()) +
                          " does not match " + shape_str(x.shape()));
  }
  return x.numel() / (x.dim(0) * x.dim(1));
}

}  // namespace

Tensor mul_channels(const Tensor& x, const Tensor& s) {
  const std::size_t inner = check_channel_operand("mul_channels", x, s);
  const std::size_t rows = s.numel();
  auto in = x.data();
  auto sv = s.data();
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < inner; ++i) out[r * inner + i] = in[r * inner + i] * sv[r];
  }
  return detail::make_result("mul_channels", x.shape(), std::move(out), {x, s},
                             [rows, inner](detail::Node& self) {
                               auto& px = *self.parents[0];
                               auto& ps = *self.parents[1];
                               const double* g = self.grad.data();
                               if (px.requires_grad) {
                                 double* dx = px.grad_buffer();
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   for (std::size_t i = 0; i < inner; ++i) dx[r * inner + i] += g[r * inner + i] * ps.data[r];
                                 }
                               }
                               if (ps.requires_grad) {
                                 double* ds = ps.grad_buffer();
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   double acc = 0.0;
                                   for (std::size_t i = 0; i < inner; ++i) acc += g[r * inner + i] * px.data[r * inner + i];
                                   ds[r] += acc;
                                 }
                               }
                             });
}

Tensor add_channels(const Tensor& x, const Tensor& b) {
  const std::size_t inner = check_channel_operand("add_channels", x, b);
  const std::size_t rows = b.numel();
  auto in = x.data();
  auto bv = b.data();
  std::vector<double> out(in.size());
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t i = 0; i < inner; ++i) out[r * inner + i] = in[r * inner + i] + bv[r];
  }
  return detail::make_result("add_channels", x.shape(), std::move(out), {x, b},
                             [rows, inner](detail::Node& self) {
                               auto& px = *self.parents[0];
                               auto& pb = *self.parents[1];
                               const double* g = self.grad.data();
                               if (px.requires_grad) {
                                 double* dx = px.grad_buffer();
                                 for (std::size_t i = 0; i < rows * inner; ++i) dx[i] += g[i];
                               }
                               if (pb.requires_grad) {
                                 double* db = pb.grad_buffer();
                                 for (std::size_t r = 0; r < rows; ++r) {
                                   double acc = 0.0;
                                   for (std::size_t i = 0; i < inner; ++i) acc += g[r * inner + i];
                                   db[r] += acc;
                                 }
                               }
                             });
}

Tensor select_rows(std::span<const std::uint8_t> use_a, const Tensor& a, const Tensor& b) {
  if (a.rank() < 2 || use_a.size() != a.dim(0)) {
    throw InvalidArgument("select_rows: mask of " + std::to_string(use_a.size()) + " entries for " +
                          shape_str(a.shape()));
  }
  const Shape row_shape(a.shape().begin() + 1, a.shape().end());
  if (b.shape() != row_shape) {
    throw InvalidArgument("select_rows: fallback row " + shape_str(b.shape()) + " does not match rows of " +
                          shape_str(a.shape()));
  }
  const std::size_t len = b.numel(), N = a.dim(0);
  std::vector<double> out(a.numel());
  for (std::size_t n = 0; n < N; ++n) {
    const double* src = use_a[n] ? a.data().data() + n * len : b.data().data();
    std::copy(src, src + len, out.data() + n * len);
  }
  std::vector<std::uint8_t> mask(use_a.begin(), use_a.end());
  return detail::make_result("select_rows", a.shape(), std::move(out), {a, b},
                             [N, len, mask = std::move(mask)](detail::Node& self) {
                               auto& pa = *self.parents[0];
                               auto& pb = *self.parents[1];
                               for (std::size_t n = 0; n < N; ++n) {
                                 const double* g = self.grad.data() + n * len;
                                 if (mask[n] && pa.requires_grad) {
                                   double* d = pa.grad_buffer() + n * len;
                                   for (std::size_t i = 0; i < len; ++i) d[i] += g[i];
                                 } else if (!mask[n] && pb.requires_grad) {
                                   double* d = pb.grad_buffer();
                                   for (std::size_t i = 0; i < len; ++i) d[i] += g[i];
                                 }
                               }
                             });
}

}  // namespace dualfusion::ops
