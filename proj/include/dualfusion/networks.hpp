#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <vector>

#include "dualfusion/layers.hpp"

namespace dualfusion {

// Interleaved sinusoidal features: [sin(t f_0), cos(t f_0), sin(t f_1), ...]
// with f_i = 10000^(-i / (dim/2)).
std::vector<double> timestep_embedding(double t, std::size_t dim);

struct DenoiserConfig {
  std::size_t latent_channels = 3;
  std::size_t refined_channels = 2;
  std::size_t style_dim = 496;
  std::size_t base_channels = 64;
  std::vector<std::size_t> channel_mult{1, 2};
  std::size_t blocks_per_level = 2;
  std::size_t embed_dim = 128;
  std::size_t norm_groups = 8;
  bool attention = false;  // not supported at desk scale; must stay off

  std::size_t width(std::size_t level) const { return base_channels * channel_mult.at(level); }
  std::size_t levels() const { return channel_mult.size(); }
};

// Residual block conditioned through adaLN-Zero:
//   h + gate(e) * F(norm(h) * (1 + scale(e)) + shift(e))
// with F = conv3(silu(conv3(silu(.)))). scale/shift/gate are affine heads of
// the embedding; the gate head starts at zero so the block is an identity.
class AdaLnZeroBlock {
 public:
  AdaLnZeroBlock(ParamBuilder& params, const std::string& name, std::size_t channels, std::size_t embed_dim,
                 std::size_t norm_groups);
  Tensor operator()(const Tensor& h, const Tensor& embedding) const;

 private:
  std::size_t channels_, groups_;
  LinearLayer shift_, scale_, gate_;
  ConvLayer conv1_, conv2_;
};

// Dual-conditional noise predictor eps(z_t, z_r, f_s, t).
//
// Parameter names (stable across save/load):
//   in_proj.{weight,bias}                       conv3 over concat(z_t, z_r)
//   time_mlp.{0,1}.{weight,bias}                sinusoid -> embedding
//   style_mlp.{0,1}.{weight,bias}               style features -> embedding
//   down.<l>.block.<k>.<role>.{weight,bias}     role in {shift, scale, gate, conv1, conv2}
//   down.<l>.to_next.{weight,bias}              conv1 after 2x pooling (l < levels-1)
//   up.<l>.from_prev.{weight,bias}              conv1 after 2x upsampling
//   up.<l>.block.<k>.<role>.{weight,bias}
//   out_proj.{weight,bias}                      zero-initialized conv3, applied to the raw residual stream
// Skip connections add the down-path activation of the same level.
class Denoiser {
 public:
  Denoiser(const DenoiserConfig& config, ParamBuilder& params);

  // Creates a freshly initialized parameter set for `config`.
  static ParameterSet init(const DenoiserConfig& config, Rng& rng);

  // z_t [N,C_z,H,W], content [N,C_r,H,W], style [N,D], one timestep per row.
  Tensor operator()(const Tensor& z_t, const Tensor& content, const Tensor& style,
                    std::span<const std::size_t> timesteps) const;

  // e_t + MLP(style); e_t [N,E], style [N,D].
  Tensor style_embedding(const Tensor& style, const Tensor& time_part) const;
  // time MLP applied to sinusoidal features, [N,E].
  Tensor time_embedding(std::span<const std::size_t> timesteps) const;

  const DenoiserConfig& config() const { return config_; }
  // Rows evaluated so far (each row is one noise prediction).
  std::uint64_t evaluations() const { return evaluations_->load(); }

 private:
  DenoiserConfig config_;
  ConvLayer in_proj_, out_proj_;
  LinearLayer time0_, time1_, style0_, style1_;
  std::vector<std::vector<AdaLnZeroBlock>> down_, up_;
  std::vector<ConvLayer> to_next_, from_prev_;
  std::shared_ptr<std::atomic<std::uint64_t>> evaluations_ = std::make_shared<std::atomic<std::uint64_t>>(0);
};

}  // namespace dualfusion
