#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "dualfusion/layers.hpp"
#include "dualfusion/tensor.hpp"

namespace dualfusion {

struct ExtractorConfig {
  std::size_t image_channels = 3;
  std::vector<std::size_t> level_channels{8, 16, 32, 64, 128};
  std::size_t kernel = 3;
  std::uint64_t seed = 1234;
};

// Concatenated per-level [means..., variances...] of the extractor pyramid.
struct StyleFeatures {
  Tensor values;  // [2 * sum(level_channels)]
  std::size_t size() const { return values.numel(); }
};

// Frozen multi-scale feature pyramid standing in for a pretrained
// classifier: level l applies a seeded k x k convolution (replicate padding)
// and silu; levels after the first start with 2x average pooling.
class StyleExtractor {
 public:
  explicit StyleExtractor(ExtractorConfig config = {});

  const ExtractorConfig& config() const { return config_; }
  std::size_t feature_length() const;

  // image [C,H,W] in [-1,1]
  StyleFeatures extract(const Tensor& image) const;
  // images [N,C,H,W] -> [N, feature_length()]
  Tensor extract_batch(const Tensor& images) const;
  // Raw feature maps, level by level, for images [N,C,H,W].
  std::vector<Tensor> feature_maps(const Tensor& images) const;

 private:
  ExtractorConfig config_;
  std::vector<Tensor> weights_, biases_;
};

struct RefinerConfig {
  std::size_t latent_channels = 16;
  std::size_t refined_channels = 12;
  // Lifts the strict-compression requirement (refined == latent); only for
  // the compression ablation.
  bool allow_full = false;
};

// Two pointwise convolutions with silu in between, compressing the content
// latent's channel depth.
class ContentRefiner {
 public:
  ContentRefiner(const RefinerConfig& config, ParamBuilder& params);

  // z_c [N, latent_channels, H, W] -> [N, refined_channels, H, W]
  Tensor operator()(const Tensor& z_c) const;
  const RefinerConfig& config() const { return config_; }

 private:
  RefinerConfig config_;
  ConvLayer expand_, compress_;
};

enum class ConditionMode : std::uint8_t { dual = 0, content_only = 1, style_only = 2 };

const char* mode_name(ConditionMode mode);

// One categorical draw u ~ U[0,1): u < p_content_only -> content-only,
// u < p_content_only + p_style_only -> style-only, otherwise dual.
ConditionMode draw_condition_mode(Rng& rng, double p_content_only, double p_style_only);

struct DroppedConditions {
  Tensor style;    // [N, D]; null rows replaced by the learnable null style
  Tensor content;  // [N, C_r, H, W]; null rows exactly zero
  std::vector<ConditionMode> modes;
};

// Applies classifier-free condition dropout per batch row.
DroppedConditions apply_condition_dropout(Rng& rng, double p_content_only, double p_style_only,
                                          const Tensor& style, const Tensor& refined,
                                          const Tensor& null_style);

// Assembles conditions for an explicit mode per row (used at inference).
DroppedConditions assemble_conditions(std::span<const ConditionMode> modes, const Tensor& style,
                                      const Tensor& refined, const Tensor& null_style);

}  // namespace dualfusion
