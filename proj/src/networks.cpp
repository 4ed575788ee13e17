#include "dualfusion/networks.hpp"

#include <cmath>

#include "dualfusion/errors.hpp"

namespace dualfusion {

std::vector<double> timestep_embedding(double t, std::size_t dim) {
  if (dim == 0 || dim % 2) throw InvalidArgument("timestep_embedding: dimension must be even and positive");
  const std::size_t half = dim / 2;
  std::vector<double> out(dim);
  for (std::size_t i = 0; i < half; ++i) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
    out[2 * i] = std::sin(t * freq);
    out[2 * i + 1] = std::cos(t * freq);
  }
  return out;
}

AdaLnZeroBlock::AdaLnZeroBlock(ParamBuilder& params, const std::string& name, std::size_t channels,
                               std::size_t embed_dim, std::size_t norm_groups)
    : channels_(channels), groups_(std::min(norm_groups, channels)) {
  if (channels % groups_) {
    throw InvalidArgument("block " + name + ": " + std::to_string(channels) + " channels not divisible into " +
                          std::to_string(groups_) + " groups");
  }
  shift_ = LinearLayer::make(params, name + ".shift", embed_dim, channels);
  scale_ = LinearLayer::make(params, name + ".scale", embed_dim, channels);
  gate_ = LinearLayer::make(params, name + ".gate", embed_dim, channels, Init::zeros);
  conv1_ = ConvLayer::make(params, name + ".conv1", channels, channels, 3);
  conv2_ = ConvLayer::make(params, name + ".conv2", channels, channels, 3);
}

Tensor AdaLnZeroBlock::operator()(const Tensor& h, const Tensor& embedding) const {
  if (h.rank() != 4 || h.dim(1) != channels_) {
    throw InvalidArgument("adaLN-Zero block of width " + std::to_string(channels_) + " got " + shape_str(h.shape()));
  }
  Tensor u = ops::normalize_channels(h, groups_);
  u = ops::add_channels(ops::mul_channels(u, ops::add_scalar(scale_(embedding), 1.0)), shift_(embedding));
  Tensor f = conv2_(ops::silu(conv1_(ops::silu(u))));
  return ops::add(h, ops::mul_channels(f, gate_(embedding)));
}

Denoiser::Denoiser(const DenoiserConfig& config, ParamBuilder& params) : config_(config) {
  if (config.attention) throw InvalidArgument("denoiser: attention blocks are not supported");
  if (config.levels() == 0 || config.base_channels == 0) throw InvalidArgument("denoiser: empty layout");
  if (config.embed_dim == 0 || config.embed_dim % 2) throw InvalidArgument("denoiser: embed_dim must be even");
  const std::size_t E = config.embed_dim, L = config.levels();
  in_proj_ = ConvLayer::make(params, "in_proj", config.latent_channels + config.refined_channels, config.width(0), 3);
  time0_ = LinearLayer::make(params, "time_mlp.0", E, E);
  time1_ = LinearLayer::make(params, "time_mlp.1", E, E);
  style0_ = LinearLayer::make(params, "style_mlp.0", config.style_dim, E);
  style1_ = LinearLayer::make(params, "style_mlp.1", E, E);
  down_.resize(L);
  for (std::size_t l = 0; l < L; ++l) {
    const std::string prefix = "down." + std::to_string(l);
    for (std::size_t k = 0; k < config.blocks_per_level; ++k) {
      down_[l].emplace_back(params, prefix + ".block." + std::to_string(k), config.width(l), E, config.norm_groups);
    }
    if (l + 1 < L) to_next_.push_back(ConvLayer::make(params, prefix + ".to_next", config.width(l), config.width(l + 1), 1));
  }
  up_.resize(L > 0 ? L - 1 : 0);
  from_prev_.resize(up_.size());
  for (std::size_t i = L - 1; i-- > 0;) {
    const std::string prefix = "up." + std::to_string(i);
    from_prev_[i] = ConvLayer::make(params, prefix + ".from_prev", config.width(i + 1), config.width(i), 1);
    for (std::size_t k = 0; k < config.blocks_per_level; ++k) {
      up_[i].emplace_back(params, prefix + ".block." + std::to_string(k), config.width(i), E, config.norm_groups);
    }
  }
  out_proj_ = ConvLayer::make(params, "out_proj", config.width(0), config.latent_channels, 3, Init::zeros);
}

ParameterSet Denoiser::init(const DenoiserConfig& config, Rng& rng) {
  ParameterSet set;
  auto builder = ParamBuilder::creating(set, rng);
  Denoiser layout(config, builder);
  return set;
}

Tensor Denoiser::time_embedding(std::span<const std::size_t> timesteps) const {
  const std::size_t E = config_.embed_dim;
  std::vector<double> raw;
  raw.reserve(timesteps.size() * E);
  for (auto t : timesteps) {
    auto v = timestep_embedding(static_cast<double>(t), E);
    raw.insert(raw.end(), v.begin(), v.end());
  }
  Tensor sinusoid({timesteps.size(), E}, std::move(raw));
  return time1_(ops::silu(time0_(sinusoid)));
}

Tensor Denoiser::style_embedding(const Tensor& style, const Tensor& time_part) const {
  if (style.rank() != 2 || style.dim(1) != config_.style_dim) {
    throw InvalidArgument("style_embedding: expected [N," + std::to_string(config_.style_dim) + "] features, got " +
                          shape_str(style.shape()));
  }
  return ops::add(time_part, style1_(ops::silu(style0_(style))));
}

Tensor Denoiser::operator()(const Tensor& z_t, const Tensor& content, const Tensor& style,
                            std::span<const std::size_t> timesteps) const {
  if (z_t.rank() != 4 || z_t.dim(1) != config_.latent_channels) {
    throw InvalidArgument("denoiser: z_t must be [N," + std::to_string(config_.latent_channels) + ",H,W], got " +
                          shape_str(z_t.shape()));
  }
  const std::size_t N = z_t.dim(0), H = z_t.dim(2), W = z_t.dim(3);
  if (content.shape() != Shape{N, config_.refined_channels, H, W}) {
    throw InvalidArgument("denoiser: content " + shape_str(content.shape()) + " does not match z_t " +
                          shape_str(z_t.shape()) + " with " + std::to_string(config_.refined_channels) +
                          " refined channels");
  }
  if (timesteps.size() != N) throw InvalidArgument("denoiser: one timestep per batch row required");
  const std::size_t factor = std::size_t{1} << (config_.levels() - 1);
  if (H % factor || W % factor) {
    throw InvalidArgument("denoiser: spatial size " + shape_str(z_t.shape()) + " not divisible by " +
                          std::to_string(factor));
  }

  const Tensor e = style_embedding(style, time_embedding(timesteps));
  Tensor h = in_proj_(ops::concat_channels({z_t, content}));
  std::vector<Tensor> skips;
  for (std::size_t l = 0; l < down_.size(); ++l) {
    for (const auto& block : down_[l]) h = block(h, e);
    if (l + 1 < down_.size()) {
      skips.push_back(h);
      h = to_next_[l](ops::downsample2x(h));
    }
  }
  for (std::size_t i = up_.size(); i-- > 0;) {
    h = ops::add(from_prev_[i](ops::upsample2x_nearest(h)), skips[i]);
    for (const auto& block : up_[i]) h = block(h, e);
  }
  // Linear readout of the residual stream. A norm here would erase each
  // channel's spatial mean, and the noise's DC component, tiny as it is,
  // becomes a large colour offset once divided by sqrt(alpha_bar) near t=T.
  Tensor out = out_proj_(h);
  evaluations_->fetch_add(N);
  return out;
}

}  // namespace dualfusion
