#include "dualfusion/errors.hpp"
#include "dualfusion/ops.hpp"

namespace dualfusion::ops {

namespace {

struct ChannelLayout {
  std::size_t samples, channels, inner;
};

ChannelLayout channel_layout(const char* op, const Tensor& x) {
  if (x.rank() < 3) {
    throw InvalidArgument(std::string(op) + ": needs [N,C,...] with a nonempty reduction domain, got " +
                          shape_str(x.shape()));
  }
  std::size_t inner = 1;
  for (std::size_t i = 2; i < x.rank(); ++i) inner *= x.dim(i);
  return {x.dim(0), x.dim(1), inner};
}

}  // namespace

Tensor channel_mean(const Tensor& x) {
  const auto L = channel_layout("channel_mean", x);
  std::vector<double> out(L.samples * L.channels);
  auto in = x.data();
  for (std::size_t r = 0; r < out.size(); ++r) {
    double s = 0.0;
    for (std::size_t i = 0; i < L.inner; ++i) s += in[r * L.inner + i];
    out[r] = s / static_cast<double>(L.inner);
  }
  return detail::make_result("channel_mean", {L.samples, L.channels}, std::move(out), {x},
                             [L](detail::Node& self) {
                               auto& px = *self.parents[0];
                               if (!px.requires_grad) return;
                               double* dx = px.grad_buffer();
                               const double inv = 1.0 / static_cast<double>(L.inner);
                               for (std::size_t r = 0; r < self.grad.size(); ++r) {
                                 const double g = self.grad[r] * inv;
                                 for (std::size_t i = 0; i < L.inner; ++i) dx[r * L.inner + i] += g;
                               }
                             });
}

Tensor channel_var(const Tensor& x) {
  const auto L = channel_layout("channel_var", x);
  const std::size_t rows = L.samples * L.channels;
  std::vector<double> out(rows), means(rows);
  auto in = x.data();
  const double n = static_cast<double>(L.inner);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* v = in.data() + r * L.inner;
    double s = 0.0;
    for (std::size_t i = 0; i < L.inner; ++i) s += v[i];
    const double m = s / n;
    double q = 0.0;
    for (std::size_t i = 0; i < L.inner; ++i) q += (v[i] - m) * (v[i] - m);
    means[r] = m;
    out[r] = q / n;
  }
  return detail::make_result("channel_var", {L.samples, L.channels}, std::move(out), {x},
                             [L, n, means = std::move(means)](detail::Node& self) {
                               auto& px = *self.parents[0];
                               if (!px.requires_grad) return;
                               double* dx = px.grad_buffer();
                               for (std::size_t r = 0; r < self.grad.size(); ++r) {
                                 const double g = 2.0 * self.grad[r] / n;
                                 const double* v = px.data.data() + r * L.inner;
                                 for (std::size_t i = 0; i < L.inner; ++i) dx[r * L.inner + i] += g * (v[i] - means[r]);
                               }
                             });
}

Tensor sum(const Tensor& x) {
  double s = 0.0;
  for (double v : x.data()) s += v;
  return detail::make_result("sum", {1}, {s}, {x}, [](detail::Node& self) {
    auto& px = *self.parents[0];
    if (!px.requires_grad) return;
    double* dx = px.grad_buffer();
    for (std::size_t i = 0; i < px.data.size(); ++i) dx[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor concat_channels(std::initializer_list<Tensor> parts) {
  return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw InvalidArgument("concat_channels: no inputs");
  const Shape& first = parts[0].shape();
  if (first.size() < 2) throw InvalidArgument("concat_channels: inputs need a channel axis");
  std::size_t inner = 1;
  for (std::size_t i = 2; i < first.size(); ++i) inner *= first[i];
  std::size_t total_channels = 0;
  std::vector<std::size_t> channels;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == first.size() && s[0] == first[0];
    for (std::size_t i = 2; ok && i < s.size(); ++i) ok = s[i] == first[i];
    if (!ok) {
      throw InvalidArgument("concat_channels: " + shape_str(s) + " disagrees with " + shape_str(first) +
                            " outside the channel axis");
    }
    channels.push_back(s[1]);
    total_channels += s[1];
  }
  const std::size_t N = first[0];
  Shape out_shape = first;
  out_shape[1] = total_channels;
  std::vector<double> out(N * total_channels * inner);
  for (std::size_t n = 0; n < N; ++n) {
    double* dst = out.data() + n * total_channels * inner;
    for (std::size_t j = 0; j < parts.size(); ++j) {
      const std::size_t len = channels[j] * inner;
      const double* src = parts[j].data().data() + n * len;
      dst = std::copy(src, src + len, dst);
    }
  }
  return detail::make_result("concat_channels", std::move(out_shape), std::move(out),
                             std::vector<Tensor>(parts.begin(), parts.end()),
                             [N, inner, total_channels, channels](detail::Node& self) {
                               for (std::size_t n = 0; n < N; ++n) {
                                 const double* src = self.grad.data() + n * total_channels * inner;
                                 for (std::size_t j = 0; j < channels.size(); ++j) {
                                   const std::size_t len = channels[j] * inner;
                                   auto& p = *self.parents[j];
                                   if (p.requires_grad) {
                                     double* d = p.grad_buffer() + n * len;
                                     for (std::size_t i = 0; i < len; ++i) d[i] += src[i];
                                   }
                                   src += len;
                                 }
                               }
                             });
}

Tensor mse(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw InvalidArgument("mse: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  auto x = a.data(), y = b.data();
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  const double n = static_cast<double>(x.size());
  return detail::make_result("mse", {1}, {s / n}, {a, b}, [n](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const double g = 2.0 * self.grad[0] / n;
    if (pa.requires_grad) {
      double* d = pa.grad_buffer();
      for (std::size_t i = 0; i < pa.data.size(); ++i) d[i] += g * (pa.data[i] - pb.data[i]);
    }
    if (pb.requires_grad) {
      double* d = pb.grad_buffer();
      for (std::size_t i = 0; i < pb.data.size(); ++i) d[i] -= g * (pa.data[i] - pb.data[i]);
    }
  });
}

Tensor stack(std::span<const Tensor> items) {
  if (items.empty()) throw InvalidArgument("stack: no inputs");
  const Shape& s = items[0].shape();
  std::vector<double> out;
  out.reserve(items.size() * items[0].numel());
  for (const auto& t : items) {
    if (t.shape() != s) throw InvalidArgument("stack: shape mismatch " + shape_str(t.shape()) + " vs " + shape_str(s));
    out.insert(out.end(), t.data().begin(), t.data().end());
  }
  Shape shape{items.size()};
  shape.insert(shape.end(), s.begin(), s.end());
  return Tensor(std::move(shape), std::move(out));
}

Tensor row(const Tensor& x, std::size_t n) {
  if (x.rank() < 2 || n >= x.dim(0)) throw InvalidArgument("row: index out of range for " + shape_str(x.shape()));
  Shape s(x.shape().begin() + 1, x.shape().end());
  const std::size_t len = shape_numel(s);
  auto d = x.data();
  return Tensor(std::move(s), std::vector<double>(d.begin() + n * len, d.begin() + (n + 1) * len));
}

}  // namespace dualfusion::ops
