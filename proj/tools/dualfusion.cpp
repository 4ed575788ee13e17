// dualfusion command-line front end.
//
//   dualfusion train    --config run.cfg --out runs/a [--seed N]
//   dualfusion sample   --checkpoint c.dcl --content c.ppm --style s.ppm --seed N --out o.ppm
//   dualfusion grid     --checkpoint c.dcl --content c.ppm --style s.ppm --seed N --out dir/
//   dualfusion interp   --checkpoint c.dcl --content c.ppm --style a.ppm --style b.ppm
//                       (--weights 0.3,0.7 | --mask m.pgm) --seed N --out o.ppm
//   dualfusion styleviz --checkpoint c.dcl --style s.ppm --seed N --out o.ppm
//   dualfusion eval     a.ppm b.ppm [--checkpoint c.dcl | --config run.cfg]
//   dualfusion inspect  --checkpoint c.dcl
//   dualfusion corpus   [--config run.cfg] --out dir/
//   dualfusion keys
//
// Exit codes: 0 ok, 2 usage, 3 I/O, 4 numeric failure.

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "dualfusion/checkpoint.hpp"
#include "dualfusion/corpus.hpp"
#include "dualfusion/errors.hpp"
#include "dualfusion/metrics.hpp"
#include "dualfusion/pipeline.hpp"
#include "dualfusion/sampler.hpp"

namespace fs = std::filesystem;
using namespace dualfusion;

namespace {

constexpr int kUsage = 2, kIo = 3, kNumeric = 4;

std::vector<double> parse_csv(const std::string& text, const char* what) {
  std::vector<double> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t comma = std::min(text.find(',', pos), text.size());
    std::string item = text.substr(pos, comma - pos);
    item.erase(0, item.find_first_not_of(" \t"));
    item.erase(item.find_last_not_of(" \t") + 1);
    double v = 0;
    auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
      throw InvalidArgument(std::string(what) + ": '" + item + "' is not a number");
    }
    out.push_back(v);
    pos = comma + 1;
  }
  return out;
}

struct Options {
  std::string config, checkpoint, out, content, weights, mask, scales, sampler, clip;
  std::vector<std::string> styles, positional;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> steps;
};

// Sampling settings: checkpoint config, then --config's sampling keys, then flags.
SamplingDefaults sampling_settings(const Options& o, const LoadedModel& lm, GridConfig* grid = nullptr) {
  RunConfig base = lm.config;
  if (!o.config.empty()) {
    const RunConfig c = load_config(o.config);
    base.sampling = c.sampling;
    base.grid = c.grid;
  }
  SamplingDefaults s = base.sampling;
  if (!o.sampler.empty()) s.spec.kind = o.sampler == "ddpm" ? SamplerKind::ddpm : SamplerKind::ddim;
  if (o.steps) s.spec.steps = *o.steps;
  // same syntax as the config key
  if (!o.clip.empty()) s.spec.clip_x0 = parse_config("clip_x0=" + o.clip).sampling.spec.clip_x0;
  if (!o.scales.empty()) {
    const auto v = parse_csv(o.scales, "--scales");
    if (v.size() != 2) throw InvalidArgument("--scales expects s_cnt,s_sty");
    s.scales = {v[0], v[1]};
  }
  if (grid) *grid = base.grid;
  return s;
}

void write_sample(const fs::path& path, const SampleResult& r) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  write_ppm(path, tensor_to_image(r.image));
}

int cmd_train(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  if (o.seed) cfg.train.seed = *o.seed;
  const auto every = std::max<std::size_t>(1, cfg.train.iterations / 20);
  const auto summary = run_training(cfg, o.out, [&](const StepStats& s) {
    if (s.iteration % every == 0 || s.iteration == cfg.train.iterations) {
      std::printf("iter %zu/%zu  loss %.5f\n", static_cast<std::size_t>(s.iteration), cfg.train.iterations, s.loss);
      std::fflush(stdout);
    }
  });
  std::printf("wrote %zu checkpoint(s) to %s\n", summary.checkpoints.size(), o.out.c_str());
  return 0;
}

int cmd_sample(const Options& o) {
  const LoadedModel lm = load_model(o.checkpoint);
  const auto s = sampling_settings(o, lm);
  const std::size_t size = lm.config.model.image_size;
  const Tensor content = read_image_tensor(o.content, size), style = read_image_tensor(o.styles.at(0), size);
  write_sample(o.out, stylize(*lm.model, content, style, s.scales, s.spec, *o.seed));
  return 0;
}

int cmd_grid(const Options& o) {
  const LoadedModel lm = load_model(o.checkpoint);
  GridConfig grid;
  const auto s = sampling_settings(o, lm, &grid);
  const std::size_t size = lm.config.model.image_size;
  const Tensor content = read_image_tensor(o.content, size);
  const StyleFeatures style = style_of(*lm.model, read_image_tensor(o.styles.at(0), size));
  const auto cells = guidance_grid(grid.content_scales, grid.style_scales, s.scales, *o.seed);
  std::vector<GuidedRequest> reqs;
  for (const auto& c : cells) {
    GuidedRequest r;
    r.content = content;
    r.styles = {style};
    r.scales = c.scales;
    r.seed = c.seed;
    reqs.push_back(std::move(r));
  }
  const auto results = run_guided_parallel(*lm.model, reqs, s.spec, thread_budget());
  fs::create_directories(o.out);
  std::vector<std::vector<ImageBuffer>> rows(2);
  for (std::size_t k = 0; k < cells.size(); ++k) {
    const ImageBuffer img = tensor_to_image(results[k].image);
    char name[96];
    std::snprintf(name, sizeof name, "cell_r%zu_c%zu_cnt%g_sty%g.ppm", cells[k].row, cells[k].col,
                  cells[k].scales.content, cells[k].scales.style);
    write_ppm(fs::path(o.out) / name, img);
    rows[cells[k].row].push_back(img);
  }
  write_ppm(fs::path(o.out) / "montage.ppm", montage(rows));
  std::printf("%zu cells, seeds %llu..%llu\n", cells.size(), static_cast<unsigned long long>(*o.seed),
              static_cast<unsigned long long>(*o.seed + cells.size() - 1));
  return 0;
}

int cmd_interp(const Options& o) {
  const LoadedModel lm = load_model(o.checkpoint);
  const auto s = sampling_settings(o, lm);
  const std::size_t size = lm.config.model.image_size;
  const Tensor content = read_image_tensor(o.content, size);
  if (!o.mask.empty()) {
    if (o.styles.size() != 2 || !o.weights.empty()) throw InvalidArgument("--mask takes exactly two --style and no --weights");
    SpatialMask mask{gray_to_mask(read_pgm(o.mask))};
    write_sample(o.out, spatial_blend(*lm.model, content, read_image_tensor(o.styles[0], size),
                                      read_image_tensor(o.styles[1], size), mask, s.scales, s.spec, *o.seed));
    return 0;
  }
  StyleMix mix;
  for (const auto& p : o.styles) mix.styles.push_back(style_of(*lm.model, read_image_tensor(p, size)));
  mix.weights = o.weights.empty() ? std::vector<double>(o.styles.size(), 1.0 / o.styles.size())
                                  : parse_csv(o.weights, "--weights");
  write_sample(o.out, interpolate_styles(*lm.model, content, mix, s.scales, s.spec, *o.seed));
  return 0;
}

int cmd_styleviz(const Options& o) {
  const LoadedModel lm = load_model(o.checkpoint);
  const auto s = sampling_settings(o, lm);
  const Tensor style = read_image_tensor(o.styles.at(0), lm.config.model.image_size);
  write_sample(o.out, style_visualize(*lm.model, style, s.spec, *o.seed));
  return 0;
}

int cmd_eval(const Options& o) {
  if (o.positional.size() != 2) throw InvalidArgument("eval takes exactly two images");
  ExtractorConfig ex;
  if (!o.checkpoint.empty()) ex = parse_config(load_checkpoint(o.checkpoint).config_text).model.extractor;
  else if (!o.config.empty()) ex = load_config(o.config).model.extractor;
  const StyleExtractor extractor(ex);
  std::printf("%.10g\n", style_stat_distance(extractor, read_ppm(o.positional[0]), read_ppm(o.positional[1])));
  return 0;
}

int cmd_inspect(const Options& o) {
  const Checkpoint ck = load_checkpoint(o.checkpoint);
  std::printf("version %u\n", static_cast<unsigned>(ck.version));
  for (const auto& [k, v] : ck.meta) std::printf("meta %s = %s\n", k.c_str(), v.c_str());
  std::size_t total = 0;
  for (const auto& t : ck.tensors) {
    std::string dims;
    for (std::size_t i = 0; i < t.shape.size(); ++i) dims += (i ? "x" : "") + std::to_string(t.shape[i]);
    std::printf("%-48s %s\n", t.name.c_str(), dims.c_str());
    total += t.values.size();
  }
  std::printf("%zu tensors, %zu values\n--- config ---\n%s", ck.tensors.size(), total, ck.config_text.c_str());
  return 0;
}

int cmd_corpus(const Options& o) {
  const RunConfig cfg = o.config.empty() ? RunConfig{} : load_config(o.config);
  const ToyCorpus corpus = generate_toy_corpus(cfg.corpus);
  write_toy_corpus(corpus, o.out);
  std::printf("%zu images in %s\n", corpus.images.size(), o.out.c_str());
  return 0;
}

int cmd_keys() {
  for (const auto& k : config_keys()) std::printf("%-22s %-28s %s\n", k.key.c_str(), k.default_value.c_str(), k.help.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dual-conditional latent diffusion style transfer at desk scale"};
  app.require_subcommand(1);
  Options o;

  auto seed_opt = [&](CLI::App* c, bool required) {
    auto* opt = c->add_option("--seed", o.seed, "random seed");
    if (required) opt->required();
  };
  auto sampling_opts = [&](CLI::App* c) {
    c->add_option("--checkpoint", o.checkpoint, "trained checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--config", o.config, "config whose sampling keys override the checkpoint's")->check(CLI::ExistingFile);
    c->add_option("--out", o.out, "output path")->required();
    c->add_option("--scales", o.scales, "guidance scales s_cnt,s_sty");
    c->add_option("--steps", o.steps, "sampling steps")->check(CLI::PositiveNumber);
    c->add_option("--sampler", o.sampler, "ddpm or ddim")->check(CLI::IsMember({"ddpm", "ddim"}));
    c->add_option("--clip-x0", o.clip, "clamp the x0 estimate: auto, off or a bound");
    seed_opt(c, true);
  };

  auto* train = app.add_subcommand("train", "train a model on the toy corpus");
  train->add_option("--config", o.config, "run config")->check(CLI::ExistingFile);
  train->add_option("--out", o.out, "output directory")->required();
  seed_opt(train, false);

  auto* sample = app.add_subcommand("sample", "stylize one content image");
  sampling_opts(sample);
  sample->add_option("--content", o.content, "content image (PPM)")->required()->check(CLI::ExistingFile);
  sample->add_option("--style", o.styles, "style image (PPM)")->required()->expected(1)->check(CLI::ExistingFile);

  auto* grid = app.add_subcommand("grid", "sweep content and style guidance scales");
  sampling_opts(grid);
  grid->add_option("--content", o.content, "content image (PPM)")->required()->check(CLI::ExistingFile);
  grid->add_option("--style", o.styles, "style image (PPM)")->required()->expected(1)->check(CLI::ExistingFile);

  auto* interp = app.add_subcommand("interp", "mix several styles by weights or a two-style mask");
  sampling_opts(interp);
  interp->add_option("--content", o.content, "content image (PPM)")->required()->check(CLI::ExistingFile);
  interp->add_option("--style", o.styles, "style image (PPM), repeatable")->required()->check(CLI::ExistingFile);
  auto* w = interp->add_option("--weights", o.weights, "comma-separated weights summing to 1");
  interp->add_option("--mask", o.mask, "P5 mask, 1 selects the first style")->check(CLI::ExistingFile)->excludes(w);

  auto* viz = app.add_subcommand("styleviz", "sample from the style-only model");
  sampling_opts(viz);
  viz->add_option("--style", o.styles, "style image (PPM)")->required()->expected(1)->check(CLI::ExistingFile);

  auto* eval = app.add_subcommand("eval", "style statistics distance between two images");
  eval->add_option("images", o.positional, "two PPM images")->required()->expected(2)->check(CLI::ExistingFile);
  eval->add_option("--checkpoint", o.checkpoint, "take the extractor settings from a checkpoint")
      ->check(CLI::ExistingFile);
  eval->add_option("--config", o.config, "take the extractor settings from a config")->check(CLI::ExistingFile);

  auto* inspect = app.add_subcommand("inspect", "list checkpoint tensors and metadata");
  inspect->add_option("--checkpoint", o.checkpoint, "checkpoint")->required()->check(CLI::ExistingFile);

  auto* corpus = app.add_subcommand("corpus", "write the toy corpus as PPM files plus a manifest");
  corpus->add_option("--config", o.config, "run config")->check(CLI::ExistingFile);
  corpus->add_option("--out", o.out, "output directory")->required();

  auto* keys = app.add_subcommand("keys", "list config keys and defaults");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kUsage;
  }

  try {
    if (*train) return cmd_train(o);
    if (*sample) return cmd_sample(o);
    if (*grid) return cmd_grid(o);
    if (*interp) return cmd_interp(o);
    if (*viz) return cmd_styleviz(o);
    if (*eval) return cmd_eval(o);
    if (*inspect) return cmd_inspect(o);
    if (*corpus) return cmd_corpus(o);
    if (*keys) return cmd_keys();
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::invalid_argument& e) {  // InvalidArgument, ConfigError
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
