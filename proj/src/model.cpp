#include "dualfusion/model.hpp"

#include <cmath>

#include "dualfusion/errors.hpp"

namespace dualfusion {

RefinerConfig ModelConfig::resolved_refiner() const {
  const std::size_t cz = codec.z_channels();
  const std::size_t cr = refiner_channels ? refiner_channels : std::max<std::size_t>(1, 3 * cz / 4);
  return {cz, cr, refiner_allow_full};
}

DenoiserConfig ModelConfig::resolved_denoiser() const {
  DenoiserConfig d = denoiser;
  d.latent_channels = codec.z_channels();
  d.refined_channels = resolved_refiner().refined_channels;
  d.style_dim = StyleExtractor(extractor).feature_length();
  return d;
}

Schedule ModelConfig::schedule() const { return linear_schedule(timesteps, beta_start, beta_end); }

Shape ModelConfig::latent_shape() const {
  const std::size_t f = codec.z_factor();
  if (image_size % f) throw InvalidArgument("image size not divisible by codec factor");
  return {codec.z_channels(), image_size / f, image_size / f};
}

DualModel::DualModel(const ModelConfig& config, const ParameterSet& params)
    : config_(config), schedule_(config.schedule()) {
  extractor_ = std::make_unique<StyleExtractor>(config.extractor);
  const ParameterSet denoiser_params = params.with_prefix("denoiser.");
  auto db = ParamBuilder::binding(denoiser_params);
  denoiser_ = std::make_unique<Denoiser>(config.resolved_denoiser(), db);
  auto pb = ParamBuilder::binding(params);
  refiner_ = std::make_unique<ContentRefiner>(config.resolved_refiner(), pb);
  codec_ = std::make_unique<Codec>(config.codec, pb);
  null_style_ = params.get("null_style");
  if (null_style_.shape() != Shape{extractor_->feature_length()}) {
    throw InvalidArgument("null_style has shape " + shape_str(null_style_.shape()) + ", expected [" +
                          std::to_string(extractor_->feature_length()) + "]");
  }
  if (params.contains("style_norm.shift")) {
    style_shift_ = params.get("style_norm.shift").detach();
    style_scale_ = params.get("style_norm.scale").detach();
    const Shape d{extractor_->feature_length()};
    if (style_shift_.shape() != d || style_scale_.shape() != d) throw InvalidArgument("style_norm has the wrong width");
  }
  config_.latent_shape();
}

ParameterSet DualModel::init_trainable(const ModelConfig& config, Rng& rng) {
  ParameterSet out;
  out.merge(Denoiser::init(config.resolved_denoiser(), rng), "denoiser.");
  auto builder = ParamBuilder::creating(out, rng);
  ContentRefiner refiner(config.resolved_refiner(), builder);
  Tensor null_style({StyleExtractor(config.extractor).feature_length()}, 0.0);
  null_style.set_requires_grad(true);
  out.add("null_style", null_style);
  return out;
}

Tensor DualModel::predict(const Tensor& z_t, const Tensor& refined, const Tensor& style,
                          std::span<const ConditionMode> modes, std::span<const std::size_t> timesteps) const {
  Tensor features = style;
  if (has_style_norm() && style.rank() == 2 && style.dim(1) == style_shift_.numel()) {
    auto x = style.data(), mu = style_shift_.data(), k = style_scale_.data();
    std::vector<double> out(x.size());
    const std::size_t D = mu.size();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x[i] - mu[i % D]) * k[i % D];
    features = Tensor(style.shape(), std::move(out));
  }
  auto cond = assemble_conditions(modes, features, refined, null_style_);
  return (*denoiser_)(z_t, cond.content, cond.style, timesteps);
}

ParameterSet style_normalizer(const Tensor& features) {
  if (features.rank() != 2 || features.dim(0) < 2) throw InvalidArgument("style_normalizer needs [M>=2, D] features");
  const std::size_t M = features.dim(0), D = features.dim(1);
  auto f = features.data();
  std::vector<double> mean(D, 0.0), scale(D, 0.0);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t d = 0; d < D; ++d) mean[d] += f[m * D + d];
  for (auto& v : mean) v /= static_cast<double>(M);
  for (std::size_t m = 0; m < M; ++m)
    for (std::size_t d = 0; d < D; ++d) scale[d] += (f[m * D + d] - mean[d]) * (f[m * D + d] - mean[d]);
  // floor keeps near-constant features from being blown up into noise
  for (auto& v : scale) v = 1.0 / std::sqrt(v / static_cast<double>(M) + 1e-6);
  ParameterSet out;
  out.add("style_norm.shift", Tensor({D}, std::move(mean)));
  out.add("style_norm.scale", Tensor({D}, std::move(scale)));
  return out;
}

}  // namespace dualfusion
