#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "dualfusion/config.hpp"

namespace dualfusion {

struct TrainingSummary {
  std::vector<double> codec_losses;
  std::vector<StepStats> steps;
  std::vector<std::filesystem::path> checkpoints;
};

// Generates the corpus, pretrains the codec (autoencoder mode), trains the
// denoiser and writes into `out_dir`:
//   loss.csv                 iteration,loss,dual,content_only,style_only
//   codec_loss.csv           iteration,loss (autoencoder mode)
//   checkpoint_<iter>.dcl    every checkpoint_every iterations
//   checkpoint.dcl           final state
// `on_step` (optional) sees every step.
TrainingSummary run_training(const RunConfig& config, const std::filesystem::path& out_dir,
                             const std::function<void(const StepStats&)>& on_step = {});

// Pretrained codec parameters for `config` (empty in identity mode).
ParameterSet prepare_codec(const RunConfig& config, const Tensor& images, std::vector<double>* losses = nullptr);

// Frozen sampling model: EMA weights of a checkpoint plus its codec.
struct LoadedModel {
  RunConfig config;
  std::uint64_t iteration = 0;
  ParameterSet params;
  std::unique_ptr<DualModel> model;
};

LoadedModel load_model(const Checkpoint& ckpt);
LoadedModel load_model(const std::filesystem::path& checkpoint_path);

// Reads a PPM and checks it matches the model's image size.
Tensor read_image_tensor(const std::filesystem::path& path, std::size_t expected_size);

}  // namespace dualfusion
