#include "dualfusion/training.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "dualfusion/errors.hpp"

namespace dualfusion {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
  if (batch_size == 0) throw InvalidArgument("batch_size must be positive");
  if (!(p_content_only >= 0.0 && p_style_only >= 0.0 && p_content_only + p_style_only <= 1.0)) {
    throw InvalidArgument("need p_content_only, p_style_only >= 0 with sum <= 1");
  }
  if (!(ema_decay > 0.0 && ema_decay < 1.0)) throw InvalidArgument("ema_decay must lie in (0, 1)");
}

namespace {

Tensor gather_rows(const Tensor& source, std::span<const std::size_t> rows) {
  std::vector<Tensor> picked;
  picked.reserve(rows.size());
  for (auto r : rows) picked.push_back(ops::row(source, r));
  return ops::stack(picked);
}

ParameterSet model_params(const ParameterSet& trainable, const ParameterSet& codec, const ParameterSet& style_norm) {
  ParameterSet all;
  all.merge(trainable);
  all.merge(codec);
  all.merge(style_norm);
  return all;
}

Tensor corpus_style_features(const ExtractorConfig& config, const Tensor& images) {
  if (images.rank() != 4 || images.dim(0) == 0) throw InvalidArgument("trainer needs a nonempty [M,C,H,W] image set");
  const StyleExtractor extractor(config);
  std::vector<Tensor> rows;
  const std::size_t M = images.dim(0);
  for (std::size_t start = 0; start < M; start += 64) {
    std::vector<std::size_t> picked;
    for (std::size_t i = start; i < std::min(M, start + 64); ++i) picked.push_back(i);
    const Tensor f = extractor.extract_batch(gather_rows(images, picked));
    for (std::size_t i = 0; i < picked.size(); ++i) rows.push_back(ops::row(f, i));
  }
  return ops::stack(rows);
}

}  // namespace

Trainer::Trainer(const ModelConfig& model_config, const TrainConfig& train_config, const Tensor& images,
                 std::vector<CorpusFamily> families, ParameterSet codec_params)
    : model_config_(model_config),
      train_config_((train_config.validate(), train_config)),
      codec_params_(std::move(codec_params)),
      styles_(corpus_style_features(model_config.extractor, images)),
      style_norm_(style_normalizer(styles_)),
      live_([&] {
        Rng init_rng = Rng(train_config.seed).fork(0);
        return DualModel::init_trainable(model_config, init_rng);
      }()),
      model_(model_config, model_params(live_, codec_params_, style_norm_)),
      optimizer_(live_, {train_config.learning_rate, train_config.adam_beta1, train_config.adam_beta2,
                         train_config.adam_eps, train_config.weight_decay}),
      ema_(live_, train_config.ema_decay),
      rng_(Rng(train_config.seed).fork(1)),
      families_(std::move(families)) {
  ema_.set_warmup(train_config.ema_warmup);
  if (families_.size() != images.dim(0)) throw InvalidArgument("trainer: one family label per image required");
  if (images.dim(2) != model_config.image_size || images.dim(3) != model_config.image_size) {
    throw InvalidArgument("trainer: images are " + shape_str(images.shape()) + ", config image_size is " +
                          std::to_string(model_config.image_size));
  }
  for (std::size_t i = 0; i < families_.size(); ++i) {
    (families_[i] == CorpusFamily::content ? content_pool_ : style_pool_).push_back(i);
    all_pool_.push_back(i);
  }
  if (train_config.dual_corpus && (content_pool_.empty() || style_pool_.empty())) {
    throw InvalidArgument("dual_corpus needs both content and style images");
  }

  NoGradGuard no_grad;
  std::vector<Tensor> z_chunks;
  const std::size_t M = images.dim(0);
  for (std::size_t start = 0; start < M; start += 64) {
    std::vector<std::size_t> rows;
    for (std::size_t i = start; i < std::min(M, start + 64); ++i) rows.push_back(i);
    const Tensor z = model_.encode(gather_rows(images, rows));
    for (std::size_t i = 0; i < rows.size(); ++i) z_chunks.push_back(ops::row(z, i));
  }
  latents_ = ops::stack(z_chunks);
}

TrainBatch Trainer::draw_batch() {
  const auto& tc = train_config_;
  TrainBatch batch;
  const std::size_t T = model_.schedule().steps();
  for (std::size_t b = 0; b < tc.batch_size; ++b) {
    const ConditionMode mode = draw_condition_mode(rng_, tc.p_content_only, tc.p_style_only);
    const auto& pool = !tc.dual_corpus ? all_pool_ : (mode == ConditionMode::content_only ? content_pool_ : style_pool_);
    batch.modes.push_back(mode);
    batch.image_indices.push_back(pool[static_cast<std::size_t>(rng_.uniform_int(0, static_cast<std::int64_t>(pool.size()) - 1))]);
    batch.timesteps.push_back(static_cast<std::size_t>(rng_.uniform_int(1, static_cast<std::int64_t>(T))));
  }
  Shape noise_shape{tc.batch_size};
  const Shape latent = model_config_.latent_shape();
  noise_shape.insert(noise_shape.end(), latent.begin(), latent.end());
  batch.noise = Tensor::randn(noise_shape, rng_);
  return batch;
}

StepStats Trainer::train_step(const TrainBatch& batch) {
  const std::size_t B = batch.image_indices.size();
  if (B == 0 || batch.modes.size() != B || batch.timesteps.size() != B || batch.noise.dim(0) != B) {
    throw InvalidArgument("train_step: inconsistent batch");
  }
  StepStats stats;
  stats.iteration = iteration_ + 1;
  for (auto m : batch.modes) ++stats.mode_counts[static_cast<std::size_t>(m)];

  const Tensor z0 = gather_rows(latents_, batch.image_indices);
  const Tensor styles = gather_rows(styles_, batch.image_indices);
  std::vector<Tensor> noisy;
  noisy.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    noisy.push_back(q_sample(ops::row(z0, b), batch.timesteps[b], ops::row(batch.noise, b), model_.schedule()));
  }
  const Tensor z_t = ops::stack(noisy);

  live_.zero_grad();
  Tensor loss;
  try {
    const Tensor refined = model_.refine(z0);
    const Tensor eps_hat = model_.predict(z_t, refined, styles, batch.modes, batch.timesteps);
    loss = simple_loss(batch.noise, eps_hat);
  } catch (const NumericError& e) {
    std::ostringstream os;
    os << "non-finite value at iteration " << stats.iteration << " (" << e.what() << "); t=";
    for (std::size_t b = 0; b < B; ++b) os << (b ? "," : "") << batch.timesteps[b];
    os << " modes=";
    for (std::size_t b = 0; b < B; ++b) os << (b ? "," : "") << mode_name(batch.modes[b]);
    throw NumericError(os.str());
  }
  backward(loss);
  // A null style unused by every row of the batch receives a zero gradient.
  for (auto& [name, t] : live_) {
    if (!t.has_grad()) t.mutable_grad();
  }
  optimizer_.step(live_);
  ema_.update(live_);
  ++iteration_;
  stats.loss = loss.item();
  return stats;
}

ParameterSet Trainer::inference_params() const {
  ParameterSet out;
  out.merge(ema_.shadow().rounded_to_float());
  out.merge(codec_params_.rounded_to_float());
  out.merge(style_norm_.rounded_to_float());
  return out;
}

Checkpoint Trainer::checkpoint(const std::string& config_text) const {
  Checkpoint ckpt;
  ckpt.config_text = config_text;
  ckpt.meta["iteration"] = std::to_string(iteration_);
  ckpt.meta["optimizer_steps"] = std::to_string(optimizer_.steps());
  ckpt.meta["ema_updates"] = std::to_string(ema_.updates());
  ckpt.add_all(live_, "live.");
  ckpt.add_all(ema_.shadow(), "ema.");
  ckpt.add_all(optimizer_.state(), "opt.");
  ckpt.add_all(codec_params_, "");
  ckpt.add_all(style_norm_, "");
  return ckpt;
}

Tensor corpus_tensor(const ToyCorpus& corpus) {
  std::vector<Tensor> rows;
  rows.reserve(corpus.images.size());
  for (const auto& img : corpus.images) rows.push_back(image_to_tensor(img.image));
  return ops::stack(rows);
}

std::vector<CorpusFamily> corpus_families(const ToyCorpus& corpus) {
  std::vector<CorpusFamily> out;
  for (const auto& img : corpus.images) out.push_back(img.family);
  return out;
}

ParameterSet inference_params_from_checkpoint(const Checkpoint& ckpt) {
  ParameterSet out = ckpt.group("ema.");
  if (out.size() == 0) throw CheckpointError(CheckpointError::Kind::missing_tensor, "checkpoint holds no EMA weights");
  out.merge(ckpt.group("codec."), "codec.");
  out.merge(ckpt.group("style_norm."), "style_norm.");
  return out;
}

}  // namespace dualfusion
