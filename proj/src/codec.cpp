#include "dualfusion/codec.hpp"

#include <cmath>

#include "dualfusion/errors.hpp"
#include "dualfusion/optim.hpp"

namespace dualfusion {

namespace {

std::size_t halvings(std::size_t factor) {
  std::size_t n = 0;
  while ((std::size_t{1} << n) < factor) ++n;
  if ((std::size_t{1} << n) != factor) throw InvalidArgument("codec factor must be a power of two");
  return n;
}

}  // namespace

Codec::Codec(const CodecConfig& config, ParamBuilder& params) : config_(config) {
  if (config.mode == CodecMode::identity) return;
  const std::size_t downs = halvings(config.factor);
  const std::size_t C = config.image_channels, w = config.width;
  enc_.push_back(ConvLayer::make(params, "codec.enc.0", C, w, 3));
  for (std::size_t i = 0; i < downs; ++i) {
    enc_.push_back(ConvLayer::make(params, "codec.enc." + std::to_string(i + 1), w, w, 3));
  }
  enc_.push_back(ConvLayer::make(params, "codec.enc." + std::to_string(downs + 1), w, config.latent_channels, 3));
  dec_.push_back(ConvLayer::make(params, "codec.dec.0", config.latent_channels, w, 3));
  for (std::size_t i = 0; i < downs; ++i) {
    dec_.push_back(ConvLayer::make(params, "codec.dec." + std::to_string(i + 1), w, w, 3));
  }
  dec_.push_back(ConvLayer::make(params, "codec.dec." + std::to_string(downs + 1), w, C, 3));
  latent_scale_ = params.param("codec.latent_scale", {1}, Init::zeros);
}

ParameterSet Codec::init(const CodecConfig& config, Rng& rng) {
  ParameterSet set;
  auto builder = ParamBuilder::creating(set, rng);
  Codec layout(config, builder);
  if (set.contains("codec.latent_scale")) {
    set.get("codec.latent_scale").mutable_data()[0] = 1.0;
    set.get("codec.latent_scale").set_requires_grad(false);
  }
  return set;
}

Shape Codec::latent_shape(std::size_t height, std::size_t width) const {
  const std::size_t f = config_.z_factor();
  if (height % f || width % f) {
    throw InvalidArgument("codec: resolution " + std::to_string(height) + "x" + std::to_string(width) +
                          " not divisible by factor " + std::to_string(f));
  }
  return {config_.z_channels(), height / f, width / f};
}

void Codec::check_image(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != config_.image_channels) {
    throw InvalidArgument("codec: expected [N," + std::to_string(config_.image_channels) + ",H,W], got " +
                          shape_str(images.shape()));
  }
  latent_shape(images.dim(2), images.dim(3));
}

Tensor Codec::encode_unscaled(const Tensor& images) const {
  check_image(images);
  if (config_.mode == CodecMode::identity) return images;
  Tensor h = ops::silu(enc_[0](images));
  for (std::size_t i = 1; i + 1 < enc_.size(); ++i) h = ops::silu(enc_[i](ops::downsample2x(h)));
  return enc_.back()(h);
}

Tensor Codec::decode_unscaled(const Tensor& latents) const {
  if (config_.mode == CodecMode::identity) return latents;
  if (latents.rank() != 4 || latents.dim(1) != config_.latent_channels) {
    throw InvalidArgument("codec: expected latents [N," + std::to_string(config_.latent_channels) + ",h,w], got " +
                          shape_str(latents.shape()));
  }
  Tensor h = ops::silu(dec_[0](latents));
  for (std::size_t i = 1; i + 1 < dec_.size(); ++i) h = ops::silu(dec_[i](ops::upsample2x_nearest(h)));
  return dec_.back()(h);
}

Tensor Codec::encode(const Tensor& images) const {
  if (config_.mode == CodecMode::identity) {
    check_image(images);
    return images;
  }
  return ops::scale(encode_unscaled(images), latent_scale_.item());
}

Tensor Codec::decode(const Tensor& latents) const {
  if (config_.mode == CodecMode::identity) return latents;
  return decode_unscaled(ops::scale(latents, 1.0 / latent_scale_.item()));
}

std::vector<double> train_codec(ParameterSet& params, const CodecConfig& config, const Tensor& images,
                                const CodecTrainOptions& options) {
  if (config.mode != CodecMode::autoencoder) throw InvalidArgument("train_codec: identity codec has no parameters");
  if (images.rank() != 4 || images.dim(0) == 0) throw InvalidArgument("train_codec: need a nonempty image batch");
  auto builder = ParamBuilder::binding(params);
  Codec codec(config, builder);

  ParameterSet trainable;
  for (auto& [name, t] : params) {
    if (name != "codec.latent_scale") trainable.add(name, t);
  }
  AdamW opt(trainable, {options.learning_rate, 0.9, 0.999, 1e-8, 0.0});
  Rng rng(options.seed);
  const std::size_t M = images.dim(0);
  std::vector<double> losses;
  for (std::size_t it = 0; it < options.iterations; ++it) {
    std::vector<Tensor> batch;
    for (std::size_t b = 0; b < options.batch_size; ++b) {
      batch.push_back(ops::row(images, static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(M) - 1))));
    }
    Tensor x = ops::stack(batch);
    trainable.zero_grad();
    Tensor loss = ops::mse(codec.decode_unscaled(codec.encode_unscaled(x)), x);
    backward(loss);
    opt.step(trainable);
    losses.push_back(loss.item());
  }

  NoGradGuard no_grad;
  double sq = 0.0;
  std::size_t count = 0;
  for (std::size_t start = 0; start < M; start += 64) {
    std::vector<Tensor> chunk;
    for (std::size_t i = start; i < std::min(M, start + 64); ++i) chunk.push_back(ops::row(images, i));
    const Tensor z = codec.encode_unscaled(ops::stack(chunk));
    for (double v : z.data()) {
      sq += v * v;
      ++count;
    }
  }
  params.get("codec.latent_scale").mutable_data()[0] = 1.0 / std::sqrt(sq / static_cast<double>(count));
  return losses;
}

}  // namespace dualfusion
