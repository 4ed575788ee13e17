#pragma once

#include <memory>
#include <span>

#include "dualfusion/codec.hpp"
#include "dualfusion/conditioning.hpp"
#include "dualfusion/diffusion.hpp"
#include "dualfusion/networks.hpp"

namespace dualfusion {

struct ModelConfig {
  std::size_t image_size = 32;
  CodecConfig codec;
  ExtractorConfig extractor;
  std::size_t refiner_channels = 0;  // 0 selects floor(3/4 * latent channels)
  bool refiner_allow_full = false;
  DenoiserConfig denoiser;           // latent/refined/style widths are filled in by resolved_denoiser()
  std::size_t timesteps = 1000;
  double beta_start = 1e-4;
  double beta_end = 0.02;

  RefinerConfig resolved_refiner() const;
  DenoiserConfig resolved_denoiser() const;
  Schedule schedule() const;
  Shape latent_shape() const;
};

// Trainable tensors live under "denoiser.", "refiner." and "null_style";
// the frozen codec lives under "codec.". Optional frozen "style_norm.shift"
// and "style_norm.scale" standardize raw style features per dimension
// before they reach the denoiser (absent = no standardization); the null
// style lives in the standardized space.
class DualModel {
 public:
  // `params` must hold the trainable set and, in autoencoder mode, the codec.
  DualModel(const ModelConfig& config, const ParameterSet& params);

  // Fresh trainable parameters (denoiser, refiner, null style).
  static ParameterSet init_trainable(const ModelConfig& config, Rng& rng);

  const ModelConfig& config() const { return config_; }
  const Schedule& schedule() const { return schedule_; }
  const Denoiser& denoiser() const { return *denoiser_; }
  const ContentRefiner& refiner() const { return *refiner_; }
  const Codec& codec() const { return *codec_; }
  const StyleExtractor& extractor() const { return *extractor_; }
  const Tensor& null_style() const { return null_style_; }
  bool has_style_norm() const { return style_shift_.defined(); }

  // images [N,C,H,W] in [-1,1]
  Tensor encode(const Tensor& images) const { return codec_->encode(images); }
  Tensor decode(const Tensor& latents) const { return codec_->decode(latents); }
  // Raw extractor features [N,D]; predict() standardizes them itself.
  Tensor style_features(const Tensor& images) const { return extractor_->extract_batch(images); }
  Tensor refine(const Tensor& z_c) const { return (*refiner_)(z_c); }

  // Noise prediction with per-row condition modes; nulls are substituted
  // for dropped conditions.
  Tensor predict(const Tensor& z_t, const Tensor& refined, const Tensor& style,
                 std::span<const ConditionMode> modes, std::span<const std::size_t> timesteps) const;

 private:
  ModelConfig config_;
  Schedule schedule_;
  std::unique_ptr<Denoiser> denoiser_;
  std::unique_ptr<ContentRefiner> refiner_;
  std::unique_ptr<Codec> codec_;
  std::unique_ptr<StyleExtractor> extractor_;
  Tensor null_style_;
  Tensor style_shift_, style_scale_;
};

// Per-dimension standardizer for raw style features [M,D] of a training
// set: "style_norm.shift" = mean, "style_norm.scale" = 1/sqrt(var + 1e-6).
ParameterSet style_normalizer(const Tensor& features);

}  // namespace dualfusion
