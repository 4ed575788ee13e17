#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "dualfusion/checkpoint.hpp"
#include "dualfusion/corpus.hpp"
#include "dualfusion/model.hpp"
#include "dualfusion/optim.hpp"

namespace dualfusion {

struct TrainConfig {
  double learning_rate = 1e-4;
  std::size_t batch_size = 16;
  std::size_t iterations = 2000;
  double weight_decay = 0.01;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double p_content_only = 0.1;
  double p_style_only = 0.5;
  double ema_decay = 0.9999;
  bool ema_warmup = true;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 500;
  // Content-only rows draw from the content family, other rows from the
  // style family.
  bool dual_corpus = false;
  std::size_t codec_iterations = 1500;
  std::size_t codec_batch_size = 16;
  double codec_learning_rate = 2e-3;

  void validate() const;
};

// Everything random about one optimization step, drawn up front.
struct TrainBatch {
  std::vector<std::size_t> image_indices;
  std::vector<ConditionMode> modes;
  std::vector<std::size_t> timesteps;
  Tensor noise;  // [B, C_z, h, w]
};

struct StepStats {
  std::uint64_t iteration = 0;
  double loss = 0.0;
  std::array<std::size_t, 3> mode_counts{};  // indexed by ConditionMode
};

// Self-reconstruction training: each image is both the content and the
// style input. The codec and extractor are frozen; latents and style
// features of the corpus are computed once up front, and the features'
// per-dimension standardizer is fixed from them.
class Trainer {
 public:
  // `codec_params` must be empty in identity mode.
  Trainer(const ModelConfig& model_config, const TrainConfig& train_config, const Tensor& images,
          std::vector<CorpusFamily> families, ParameterSet codec_params);

  TrainBatch draw_batch();
  StepStats train_step(const TrainBatch& batch);
  StepStats step() { return train_step(draw_batch()); }

  const ModelConfig& model_config() const { return model_config_; }
  const TrainConfig& train_config() const { return train_config_; }
  std::uint64_t iteration() const { return iteration_; }
  const ParameterSet& live() const { return live_; }
  const Ema& ema() const { return ema_; }
  const AdamW& optimizer() const { return optimizer_; }
  const ParameterSet& codec_params() const { return codec_params_; }
  const ParameterSet& style_norm() const { return style_norm_; }
  const DualModel& live_model() const { return model_; }

  // EMA weights plus codec, rounded to checkpoint precision. Sampling from
  // this set and from a reloaded checkpoint gives identical results.
  ParameterSet inference_params() const;
  Checkpoint checkpoint(const std::string& config_text) const;

 private:
  ModelConfig model_config_;
  TrainConfig train_config_;
  ParameterSet codec_params_;
  Tensor styles_;  // raw features [M, D]
  ParameterSet style_norm_;
  ParameterSet live_;
  DualModel model_;
  AdamW optimizer_;
  Ema ema_;
  Rng rng_;
  Tensor latents_;  // [M, C_z, h, w]
  std::vector<CorpusFamily> families_;
  std::vector<std::size_t> content_pool_, style_pool_, all_pool_;
  std::uint64_t iteration_ = 0;
};

// Images of a corpus as one [M,3,S,S] tensor in [-1,1].
Tensor corpus_tensor(const ToyCorpus& corpus);
std::vector<CorpusFamily> corpus_families(const ToyCorpus& corpus);

// Parameters for sampling from a checkpoint written by Trainer::checkpoint.
ParameterSet inference_params_from_checkpoint(const Checkpoint& ckpt);

}  // namespace dualfusion
