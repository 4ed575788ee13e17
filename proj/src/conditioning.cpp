#include "dualfusion/conditioning.hpp"

#include <cmath>
#include <numeric>

#include "dualfusion/errors.hpp"

namespace dualfusion {

StyleExtractor::StyleExtractor(ExtractorConfig config) : config_(std::move(config)) {
  if (config_.level_channels.empty()) throw InvalidArgument("extractor needs at least one level");
  if (config_.kernel % 2 == 0) throw InvalidArgument("extractor kernel must be odd");
  Rng rng(config_.seed);
  std::size_t in = config_.image_channels;
  for (auto out : config_.level_channels) {
    const std::size_t k = config_.kernel;
    // Gain sqrt(2) keeps activations from collapsing through the silu stack.
    const double stddev = std::sqrt(2.0 / static_cast<double>(in * k * k));
    Tensor w({out, in, k, k});
    for (auto& v : w.mutable_data()) v = stddev * rng.normal();
    Tensor b({out});
    for (auto& v : b.mutable_data()) v = 0.1 * rng.normal();
    weights_.push_back(std::move(w));
    biases_.push_back(std::move(b));
    in = out;
  }
}

std::size_t StyleExtractor::feature_length() const {
  return 2 * std::accumulate(config_.level_channels.begin(), config_.level_channels.end(), std::size_t{0});
}

std::vector<Tensor> StyleExtractor::feature_maps(const Tensor& images) const {
  if (images.rank() != 4 || images.dim(1) != config_.image_channels) {
    throw InvalidArgument("style extractor expects [N," + std::to_string(config_.image_channels) +
                          ",H,W] images, got " + shape_str(images.shape()));
  }
  const std::size_t factor = std::size_t{1} << (config_.level_channels.size() - 1);
  if (images.dim(2) % factor || images.dim(3) % factor) {
    throw InvalidArgument("style extractor: spatial size " + shape_str(images.shape()) +
                          " not divisible by " + std::to_string(factor));
  }
  NoGradGuard no_grad;
  std::vector<Tensor> maps;
  Tensor h = images;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    if (l > 0) h = ops::downsample2x(h);
    h = ops::silu(ops::conv2d(h, weights_[l], biases_[l], ops::Padding::replicate));
    maps.push_back(h);
  }
  return maps;
}

Tensor StyleExtractor::extract_batch(const Tensor& images) const {
  auto maps = feature_maps(images);
  NoGradGuard no_grad;
  const std::size_t N = images.dim(0), D = feature_length();
  std::vector<double> out(N * D);
  for (std::size_t n = 0; n < N; ++n) {
    double* dst = out.data() + n * D;
    for (const auto& m : maps) {
      const std::size_t C = m.dim(1);
      const Tensor mean_t = ops::channel_mean(m), var_t = ops::channel_var(m);
      auto mu = mean_t.data();
      auto var = var_t.data();
      dst = std::copy(mu.begin() + n * C, mu.begin() + (n + 1) * C, dst);
      dst = std::copy(var.begin() + n * C, var.begin() + (n + 1) * C, dst);
    }
  }
  return Tensor({N, D}, std::move(out));
}

StyleFeatures StyleExtractor::extract(const Tensor& image) const {
  if (image.rank() != 3) throw InvalidArgument("extract: expected [C,H,W], got " + shape_str(image.shape()));
  Shape s{1};
  s.insert(s.end(), image.shape().begin(), image.shape().end());
  Tensor batch = extract_batch(Tensor(s, std::vector<double>(image.data().begin(), image.data().end())));
  return {batch.reshape({feature_length()}).detach()};
}

ContentRefiner::ContentRefiner(const RefinerConfig& config, ParamBuilder& params) : config_(config) {
  if (config.refined_channels == 0) throw InvalidArgument("refiner: refined channel count must be positive");
  if (config.refined_channels > config.latent_channels ||
      (config.refined_channels == config.latent_channels && !config.allow_full)) {
    throw InvalidArgument("refiner: refined channels (" + std::to_string(config.refined_channels) +
                          ") must be fewer than latent channels (" + std::to_string(config.latent_channels) + ")");
  }
  expand_ = ConvLayer::make(params, "refiner.conv1", config.latent_channels, config.latent_channels, 1);
  compress_ = ConvLayer::make(params, "refiner.conv2", config.latent_channels, config.refined_channels, 1);
}

Tensor ContentRefiner::operator()(const Tensor& z_c) const {
  if (z_c.rank() != 4 || z_c.dim(1) != config_.latent_channels) {
    throw InvalidArgument("refine_content: expected " + std::to_string(config_.latent_channels) +
                          " latent channels, got " + shape_str(z_c.shape()));
  }
  return compress_(ops::silu(expand_(z_c)));
}

const char* mode_name(ConditionMode mode) {
  switch (mode) {
    case ConditionMode::dual: return "dual";
    case ConditionMode::content_only: return "content_only";
    case ConditionMode::style_only: return "style_only";
  }
  return "unknown";
}

ConditionMode draw_condition_mode(Rng& rng, double p_content_only, double p_style_only) {
  if (!(p_content_only >= 0.0 && p_style_only >= 0.0 && p_content_only + p_style_only <= 1.0)) {
    throw InvalidArgument("condition dropout needs p_c, p_s >= 0 and p_c + p_s <= 1");
  }
  const double u = rng.uniform();
  if (u < p_content_only) return ConditionMode::content_only;
  if (u < p_content_only + p_style_only) return ConditionMode::style_only;
  return ConditionMode::dual;
}

DroppedConditions assemble_conditions(std::span<const ConditionMode> modes, const Tensor& style,
                                      const Tensor& refined, const Tensor& null_style) {
  const std::size_t N = modes.size();
  if (style.rank() != 2 || style.dim(0) != N || refined.rank() != 4 || refined.dim(0) != N) {
    throw InvalidArgument("condition batch mismatch: " + std::to_string(N) + " modes, style " +
                          shape_str(style.shape()) + ", content " + shape_str(refined.shape()));
  }
  std::vector<std::uint8_t> keep_style(N), keep_content(N);
  for (std::size_t n = 0; n < N; ++n) {
    keep_style[n] = modes[n] != ConditionMode::content_only;
    keep_content[n] = modes[n] != ConditionMode::style_only;
  }
  const Shape content_row(refined.shape().begin() + 1, refined.shape().end());
  DroppedConditions out;
  out.style = ops::select_rows(keep_style, style, null_style);
  out.content = ops::select_rows(keep_content, refined, Tensor(content_row, 0.0));
  out.modes.assign(modes.begin(), modes.end());
  return out;
}

DroppedConditions apply_condition_dropout(Rng& rng, double p_content_only, double p_style_only,
                                          const Tensor& style, const Tensor& refined,
                                          const Tensor& null_style) {
  std::vector<ConditionMode> modes(style.rank() == 2 ? style.dim(0) : 0);
  for (auto& m : modes) m = draw_condition_mode(rng, p_content_only, p_style_only);
  return assemble_conditions(modes, style, refined, null_style);
}

}  // namespace dualfusion
