#pragma once

#include <optional>

#include "dualfusion/layers.hpp"

namespace dualfusion {

enum class CodecMode { identity, autoencoder };

struct CodecConfig {
  CodecMode mode = CodecMode::identity;
  std::size_t image_channels = 3;
  std::size_t latent_channels = 16;  // autoencoder mode only
  std::size_t factor = 4;            // spatial reduction, power of two
  std::size_t width = 32;

  std::size_t z_channels() const { return mode == CodecMode::identity ? image_channels : latent_channels; }
  std::size_t z_factor() const { return mode == CodecMode::identity ? 1 : factor; }
};

// First-stage codec mapping images [N,C,H,W] to latents and back.
//
// Identity mode passes images through. Autoencoder mode is a small conv
// encoder/decoder trained for reconstruction only; latents are multiplied by
// the stored scalar `codec.latent_scale` so they have roughly unit variance.
//
// Parameter names: codec.enc.<i>.{weight,bias}, codec.dec.<i>.{weight,bias},
// codec.latent_scale.
class Codec {
 public:
  Codec(const CodecConfig& config, ParamBuilder& params);
  static ParameterSet init(const CodecConfig& config, Rng& rng);

  Tensor encode(const Tensor& images) const;
  Tensor decode(const Tensor& latents) const;
  // encode without the latent scale, for scale calibration and training.
  Tensor encode_unscaled(const Tensor& images) const;
  Tensor decode_unscaled(const Tensor& latents) const;

  const CodecConfig& config() const { return config_; }
  Shape latent_shape(std::size_t height, std::size_t width) const;

 private:
  CodecConfig config_;
  std::vector<ConvLayer> enc_, dec_;
  Tensor latent_scale_;
  void check_image(const Tensor& images) const;
};

struct CodecTrainOptions {
  std::size_t iterations = 1500;
  std::size_t batch_size = 16;
  double learning_rate = 2e-3;
  std::uint64_t seed = 0;
};

// Trains an autoencoder-mode codec on images [M,C,H,W] by reconstruction
// MSE, then sets codec.latent_scale to 1 / RMS of the training latents.
// Returns the per-iteration loss.
std::vector<double> train_codec(ParameterSet& params, const CodecConfig& config, const Tensor& images,
                                const CodecTrainOptions& options);

}  // namespace dualfusion
