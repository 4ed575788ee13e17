#include "dualfusion/pipeline.hpp"

#include <fstream>

#include "dualfusion/errors.hpp"

namespace dualfusion {

ParameterSet prepare_codec(const RunConfig& config, const Tensor& images, std::vector<double>* losses) {
  if (config.model.codec.mode == CodecMode::identity) return {};
  Rng rng = Rng(config.train.seed).fork(2);
  ParameterSet codec = Codec::init(config.model.codec, rng);
  CodecTrainOptions options;
  options.iterations = config.train.codec_iterations;
  options.batch_size = config.train.codec_batch_size;
  options.learning_rate = config.train.codec_learning_rate;
  options.seed = Rng(config.train.seed).fork(3).next_u64();
  auto l = train_codec(codec, config.model.codec, images, options);
  if (losses) *losses = std::move(l);
  return codec;
}

TrainingSummary run_training(const RunConfig& config, const std::filesystem::path& out_dir,
                             const std::function<void(const StepStats&)>& on_step) {
  std::filesystem::create_directories(out_dir);
  const ToyCorpus corpus = generate_toy_corpus(config.corpus);
  const Tensor images = corpus_tensor(corpus);
  TrainingSummary summary;
  ParameterSet codec = prepare_codec(config, images, &summary.codec_losses);
  if (!summary.codec_losses.empty()) {
    std::ofstream csv(out_dir / "codec_loss.csv");
    csv << "iteration,loss\n";
    csv.precision(10);
    for (std::size_t i = 0; i < summary.codec_losses.size(); ++i) csv << i + 1 << ',' << summary.codec_losses[i] << '\n';
  }

  Trainer trainer(config.model, config.train, images, corpus_families(corpus), std::move(codec));
  const std::string config_text = serialize_config(config);
  std::ofstream log(out_dir / "loss.csv");
  if (!log) throw IoError("cannot write " + (out_dir / "loss.csv").string());
  log << "iteration,loss,dual,content_only,style_only\n";
  log.precision(10);
  for (std::size_t it = 0; it < config.train.iterations; ++it) {
    const StepStats s = trainer.step();
    log << s.iteration << ',' << s.loss << ',' << s.mode_counts[0] << ',' << s.mode_counts[1] << ','
        << s.mode_counts[2] << '\n';
    summary.steps.push_back(s);
    if (on_step) on_step(s);
    const auto every = config.train.checkpoint_every;
    if (every && s.iteration % every == 0 && s.iteration != config.train.iterations) {
      const auto path = out_dir / ("checkpoint_" + std::to_string(s.iteration) + ".dcl");
      save_checkpoint(path, trainer.checkpoint(config_text));
      summary.checkpoints.push_back(path);
    }
  }
  log.flush();
  const auto final_path = out_dir / "checkpoint.dcl";
  save_checkpoint(final_path, trainer.checkpoint(config_text));
  summary.checkpoints.push_back(final_path);
  return summary;
}

LoadedModel load_model(const Checkpoint& ckpt) {
  LoadedModel out;
  out.config = parse_config(ckpt.config_text);
  out.iteration = ckpt.meta_u64("iteration");
  out.params = inference_params_from_checkpoint(ckpt);
  out.model = std::make_unique<DualModel>(out.config.model, out.params);
  return out;
}

LoadedModel load_model(const std::filesystem::path& checkpoint_path) {
  return load_model(load_checkpoint(checkpoint_path));
}

Tensor read_image_tensor(const std::filesystem::path& path, std::size_t expected_size) {
  const ImageBuffer img = read_ppm(path);
  if (img.width != expected_size || img.height != expected_size) {
    throw InvalidArgument(path.string() + " is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                          ", model expects " + std::to_string(expected_size) + "x" + std::to_string(expected_size));
  }
  return image_to_tensor(img);
}

}  // namespace dualfusion
