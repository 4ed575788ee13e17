#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dualfusion/model.hpp"

namespace dualfusion {

struct GuidanceScales {
  double content = 0.6;
  double style = 3.0;
};

enum class SamplerKind { ddpm, ddim };

const char* sampler_name(SamplerKind kind);

struct SamplerSpec {
  SamplerKind kind = SamplerKind::ddim;
  std::size_t steps = 250;
  ReverseVariance variance = ReverseVariance::beta_tilde;  // DDPM only
  // Rows per denoiser call; bounds memory, never changes results.
  std::size_t max_batch = 48;
  // Clamp the implied x0 to [-clip_x0, clip_x0] every step. kClipAuto
  // clamps to the image range [-1,1] when diffusing in pixel space (identity
  // codec) and to +-3 for autoencoder latents, which the codec calibrates to
  // unit RMS; 0 disables clamping.
  static constexpr double kClipAuto = -1.0;
  double clip_x0 = kClipAuto;
};

// Two-dimensional classifier-free guidance:
//   (s_c + s_s - 1) dual - (s_c - 1) style_only - (s_s - 1) content_only
// where style_only drops the content condition and content_only drops the
// style condition. s_c = s_s = 1 reduces to the dual prediction.
Tensor cfg2d(const Tensor& dual, const Tensor& style_only, const Tensor& content_only, const GuidanceScales& scales);

struct StyleMix {
  std::vector<StyleFeatures> styles;
  std::vector<double> weights;  // must sum to 1 within 1e-9
};

// Mask over the latent grid [h,w] (or the image grid [H,W], which is
// average-pooled down to the latent grid). Values must lie in [0,1]; 1
// selects style A.
struct SpatialMask {
  Tensor values;
};

// One sampling job. With a content latent, each style is guided through
// cfg2d and the guided predictions are combined (weights, or the mask for
// exactly two styles). Without content, the single style drives the
// style-only prediction directly.
struct GuidedRequest {
  Tensor content;                     // image [3,H,W]; undefined for style visualization
  std::vector<StyleFeatures> styles;  // at least one
  std::vector<double> weights;        // one per style; empty means {1}
  Tensor mask;                        // latent-resolution [h,w]; only with two styles
  GuidanceScales scales;
  std::uint64_t seed = 0;
};

struct SampleResult {
  Tensor image;   // [3,H,W], decoded, not clamped
  Tensor latent;  // final latent [C_z,h,w]
};

// Runs all requests in lockstep, sharing denoiser calls. Each request's
// result is bitwise identical to running it alone.
std::vector<SampleResult> run_guided(const DualModel& model, std::span<const GuidedRequest> requests,
                                     const SamplerSpec& spec);

SampleResult stylize(const DualModel& model, const Tensor& content_image, const Tensor& style_image,
                     const GuidanceScales& scales, const SamplerSpec& spec, std::uint64_t seed);
SampleResult style_visualize(const DualModel& model, const Tensor& style_image, const SamplerSpec& spec,
                             std::uint64_t seed);
SampleResult interpolate_styles(const DualModel& model, const Tensor& content_image, const StyleMix& mix,
                                const GuidanceScales& scales, const SamplerSpec& spec, std::uint64_t seed);
SampleResult spatial_blend(const DualModel& model, const Tensor& content_image, const Tensor& style_a,
                           const Tensor& style_b, const SpatialMask& mask, const GuidanceScales& scales,
                           const SamplerSpec& spec, std::uint64_t seed);

// Same results as run_guided; requests are split into contiguous chunks run on
// up to `threads` worker threads.
std::vector<SampleResult> run_guided_parallel(const DualModel& model, std::span<const GuidedRequest> requests,
                                              const SamplerSpec& spec, std::size_t threads);

// DUALFUSION_THREADS if set (>= 1), otherwise the hardware concurrency.
std::size_t thread_budget();

// Two-row guidance lattice: row 0 sweeps the content scale with the style
// scale held at `fixed.style`, row 1 sweeps the style scale with the content
// scale held at `fixed.content`. Cell k (row-major) is sampled with seed
// base_seed + k.
struct GridCell {
  std::size_t row = 0, col = 0;
  GuidanceScales scales;
  std::uint64_t seed = 0;
};

std::vector<GridCell> guidance_grid(std::span<const double> content_scales, std::span<const double> style_scales,
                                    const GuidanceScales& fixed, std::uint64_t base_seed);

// Brings a mask to latent resolution [h,w] for `model`, validating its range.
Tensor latent_mask(const DualModel& model, const SpatialMask& mask);
StyleFeatures style_of(const DualModel& model, const Tensor& style_image);

}  // namespace dualfusion
