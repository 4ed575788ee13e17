#include <Eigen/Core>

#include "dualfusion/errors.hpp"
#include "dualfusion/ops.hpp"

namespace dualfusion::ops {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1>;
using MapVec = Eigen::Map<Vec>;
using ConstMapVec = Eigen::Map<const Vec>;

void require_rank(const char* op, const Tensor& t, std::size_t rank) {
  if (t.rank() != rank) {
    throw InvalidArgument(std::string(op) + ": expected rank " + std::to_string(rank) + ", got shape " +
                          shape_str(t.shape()));
  }
}

struct ConvGeometry {
  std::size_t channels, height, width, kernel, pad;
  std::size_t rows() const { return channels * kernel * kernel; }
  std::size_t cols() const { return height * width; }
};

// Column buffer [C*k*k, H*W] for one sample.
void im2col(const double* x, const ConvGeometry& g, Padding padding, double* col) {
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  const auto W = static_cast<std::ptrdiff_t>(g.width);
  const auto k = static_cast<std::ptrdiff_t>(g.kernel);
  const auto p = static_cast<std::ptrdiff_t>(g.pad);
  std::size_t r = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    const double* plane = x + c * g.height * g.width;
    for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
      for (std::ptrdiff_t kx = 0; kx < k; ++kx, ++r) {
        double* dst = col + r * g.cols();
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          std::ptrdiff_t sy = y + ky - p;
          const bool row_out = sy < 0 || sy >= H;
          if (row_out && padding == Padding::zeros) {
            std::fill(dst + y * W, dst + (y + 1) * W, 0.0);
            continue;
          }
          sy = std::clamp<std::ptrdiff_t>(sy, 0, H - 1);
          for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
            std::ptrdiff_t sx = xx + kx - p;
            if (sx < 0 || sx >= W) {
              if (padding == Padding::zeros) {
                dst[y * W + xx] = 0.0;
                continue;
              }
              sx = std::clamp<std::ptrdiff_t>(sx, 0, W - 1);
            }
            dst[y * W + xx] = plane[sy * W + sx];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column gradients back onto the input grid.
void col2im_add(const double* col, const ConvGeometry& g, Padding padding, double* dx) {
  const auto H = static_cast<std::ptrdiff_t>(g.height);
  const auto W = static_cast<std::ptrdiff_t>(g.width);
  const auto k = static_cast<std::ptrdiff_t>(g.kernel);
  const auto p = static_cast<std::ptrdiff_t>(g.pad);
  std::size_t r = 0;
  for (std::size_t c = 0; c < g.channels; ++c) {
    double* plane = dx + c * g.height * g.width;
    for (std::ptrdiff_t ky = 0; ky < k; ++ky) {
      for (std::ptrdiff_t kx = 0; kx < k; ++kx, ++r) {
        const double* src = col + r * g.cols();
        for (std::ptrdiff_t y = 0; y < H; ++y) {
          std::ptrdiff_t sy = y + ky - p;
          if ((sy < 0 || sy >= H) && padding == Padding::zeros) continue;
          sy = std::clamp<std::ptrdiff_t>(sy, 0, H - 1);
          for (std::ptrdiff_t xx = 0; xx < W; ++xx) {
            std::ptrdiff_t sx = xx + kx - p;
            if (sx < 0 || sx >= W) {
              if (padding == Padding::zeros) continue;
              sx = std::clamp<std::ptrdiff_t>(sx, 0, W - 1);
            }
            plane[sy * W + sx] += src[y * W + xx];
          }
        }
      }
    }
  }
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2);
  require_rank("matmul", b, 2);
  const std::size_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
  if (b.dim(0) != K) {
    throw InvalidArgument("matmul: nonconforming shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  std::vector<double> out(M * N);
  MapMat(out.data(), M, N).noalias() = ConstMapMat(a.data().data(), M, K) * ConstMapMat(b.data().data(), K, N);
  return detail::make_result("matmul", {M, N}, std::move(out), {a, b}, [M, K, N](detail::Node& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    ConstMapMat g(self.grad.data(), M, N);
    if (pa.requires_grad) {
      MapMat(pa.grad_buffer(), M, K).noalias() += g * ConstMapMat(pb.data.data(), K, N).transpose();
    }
    if (pb.requires_grad) {
      MapMat(pb.grad_buffer(), K, N).noalias() += ConstMapMat(pa.data.data(), M, K).transpose() * g;
    }
  });
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("linear", x, 2);
  require_rank("linear", weight, 2);
  const std::size_t N = x.dim(0), in = x.dim(1), outd = weight.dim(0);
  if (weight.dim(1) != in) {
    throw InvalidArgument("linear: input width " + std::to_string(in) + " does not match weight " +
                          shape_str(weight.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{outd}) {
    throw InvalidArgument("linear: bias shape " + shape_str(bias.shape()) + " for " + std::to_string(outd) +
                          " outputs");
  }
  std::vector<double> out(N * outd);
  ConstMapMat w(weight.data().data(), outd, in);
  // Row-at-a-time keeps each sample's arithmetic independent of batch size.
  for (std::size_t n = 0; n < N; ++n) {
    MapVec y(out.data() + n * outd, outd);
    y.noalias() = w * ConstMapVec(x.data().data() + n * in, in);
    if (has_bias) y += ConstMapVec(bias.data().data(), outd);
  }
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return detail::make_result("linear", {N, outd}, std::move(out), std::move(inputs),
                             [N, in, outd, has_bias](detail::Node& self) {
                               auto& px = *self.parents[0];
                               auto& pw = *self.parents[1];
                               ConstMapMat g(self.grad.data(), N, outd);
                               if (px.requires_grad) {
                                 MapMat(px.grad_buffer(), N, in).noalias() +=
                                     g * ConstMapMat(pw.data.data(), outd, in);
                               }
                               if (pw.requires_grad) {
                                 MapMat(pw.grad_buffer(), outd, in).noalias() +=
                                     g.transpose() * ConstMapMat(px.data.data(), N, in);
                               }
                               if (has_bias && self.parents[2]->requires_grad) {
                                 // plain loops: Eigen's vectorized sums start at the first aligned
                                 // element, which makes the rounding depend on the heap address
                                 double* gb = self.parents[2]->grad_buffer();
                                 for (std::size_t n = 0; n < N; ++n)
                                   for (std::size_t o = 0; o < outd; ++o) gb[o] += self.grad[n * outd + o];
                               }
                             });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Padding padding) {
  require_rank("conv2d", x, 4);
  require_rank("conv2d", weight, 4);
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = weight.dim(0), k = weight.dim(2);
  if (weight.dim(1) != C || weight.dim(3) != k || k % 2 == 0) {
    throw InvalidArgument("conv2d: weight " + shape_str(weight.shape()) + " incompatible with input " +
                          shape_str(x.shape()));
  }
  const bool has_bias = bias.defined();
  if (has_bias && bias.shape() != Shape{O}) {
    throw InvalidArgument("conv2d: bias shape " + shape_str(bias.shape()) + " for " + std::to_string(O) +
                          " output channels");
  }
  const ConvGeometry geo{C, H, W, k, k / 2};
  const std::size_t R = geo.rows(), P = geo.cols();
  const bool direct = k == 1;

  std::vector<double> out(N * O * P);
  std::vector<double> col(direct ? 0 : R * P);
  ConstMapMat w(weight.data().data(), O, R);
  for (std::size_t n = 0; n < N; ++n) {
    const double* xn = x.data().data() + n * C * H * W;
    if (!direct) im2col(xn, geo, padding, col.data());
    MapMat y(out.data() + n * O * P, O, P);
    y.noalias() = w * ConstMapMat(direct ? xn : col.data(), R, P);
    if (has_bias) y.colwise() += ConstMapVec(bias.data().data(), O);
  }

  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return detail::make_result(
      "conv2d", {N, O, H, W}, std::move(out), std::move(inputs),
      [N, O, geo, R, P, has_bias, direct, padding](detail::Node& self) {
        auto& px = *self.parents[0];
        auto& pw = *self.parents[1];
        const std::size_t in_size = geo.channels * P;
        std::vector<double> col(direct ? 0 : R * P);
        std::vector<double> dcol(direct ? 0 : R * P);
        ConstMapMat w(pw.data.data(), O, R);
        for (std::size_t n = 0; n < N; ++n) {
          ConstMapMat g(self.grad.data() + n * O * P, O, P);
          const double* xn = px.data.data() + n * in_size;
          if (pw.requires_grad) {
            if (!direct) im2col(xn, geo, padding, col.data());
            MapMat(pw.grad_buffer(), O, R).noalias() += g * ConstMapMat(direct ? xn : col.data(), R, P).transpose();
          }
          if (has_bias && self.parents[2]->requires_grad) {
            double* gb = self.parents[2]->grad_buffer();  // fixed-order sum, see linear()
            const double* gn = self.grad.data() + n * O * P;
            for (std::size_t o = 0; o < O; ++o) {
              double acc = 0.0;
              for (std::size_t p = 0; p < P; ++p) acc += gn[o * P + p];
              gb[o] += acc;
            }
          }
          if (px.requires_grad) {
            double* dx = px.grad_buffer() + n * in_size;
            if (direct) {
              MapMat(dx, R, P).noalias() += w.transpose() * g;
            } else {
              MapMat(dcol.data(), R, P).noalias() = w.transpose() * g;
              col2im_add(dcol.data(), geo, padding, dx);
            }
          }
        }
      });
}

Tensor downsample2x(const Tensor& x) {
  require_rank("downsample2x", x, 4);
  const std::size_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (H % 2 || W % 2) throw InvalidArgument("downsample2x: odd spatial extent in " + shape_str(x.shape()));
  const std::size_t h = H / 2, w = W / 2, planes = N * C;
  std::vector<double> out(planes * h * w);
  auto in = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * H * W;
    double* dst = out.data() + p * h * w;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t xx = 0; xx < w; ++xx) {
        const double* s = src + 2 * y * W + 2 * xx;
        dst[y * w + xx] = 0.25 * ((s[0] + s[1]) + (s[W] + s[W + 1]));
      }
    }
  }
  return detail::make_result("downsample2x", {N, C, h, w}, std::move(out), {x},
                             [planes, H, W, h, w](detail::Node& self) {
                               auto& px = *self.parents[0];
                               if (!px.requires_grad) return;
                               double* dx = px.grad_buffer();
                               for (std::size_t p = 0; p < planes; ++p) {
                                 const double* g = self.grad.data() + p * h * w;
                                 double* d = dx + p * H * W;
                                 for (std::size_t y = 0; y < h; ++y) {
                                   for (std::size_t xx = 0; xx < w; ++xx) {
                                     const double v = 0.25 * g[y * w + xx];
                                     double* t = d + 2 * y * W + 2 * xx;
                                     t[0] += v;
                                     t[1] += v;
                                     t[W] += v;
                                     t[W + 1] += v;
                                   }
                                 }
                               }
                             });
}

Tensor upsample2x_nearest(const Tensor& x) {
  require_rank("upsample2x_nearest", x, 4);
  const std::size_t N = x.dim(0), C = x.dim(1), h = x.dim(2), w = x.dim(3);
  const std::size_t H = 2 * h, W = 2 * w, planes = N * C;
  std::vector<double> out(planes * H * W);
  auto in = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = in.data() + p * h * w;
    double* dst = out.data() + p * H * W;
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t xx = 0; xx < W; ++xx) dst[y * W + xx] = src[(y / 2) * w + xx / 2];
    }
  }
  return detail::make_result("upsample2x_nearest", {N, C, H, W}, std::move(out), {x},
                             [planes, H, W, h, w](detail::Node& self) {
                               auto& px = *self.parents[0];
                               if (!px.requires_grad) return;
                               double* dx = px.grad_buffer();
                               for (std::size_t p = 0; p < planes; ++p) {
                                 const double* g = self.grad.data() + p * H * W;
                                 double* d = dx + p * h * w;
                                 for (std::size_t y = 0; y < H; ++y) {
                                   for (std::size_t xx = 0; xx < W; ++xx) d[(y / 2) * w + xx / 2] += g[y * W + xx];
                                 }
                               }
                             });
}

}  // namespace dualfusion::ops
