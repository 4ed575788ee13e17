#include "dualfusion/config.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <sstream>

#include "dualfusion/errors.hpp"
#include "dualfusion/image.hpp"

namespace dualfusion {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Value parsers throw std::invalid_argument with a short reason; the caller
// adds line context.
std::uint64_t parse_u64(std::string_view s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) throw std::invalid_argument("expected a non-negative integer");
  return v;
}

std::size_t parse_size(std::string_view s) { return static_cast<std::size_t>(parse_u64(s)); }

std::size_t parse_positive(std::string_view s) {
  const auto v = parse_size(s);
  if (v == 0) throw std::invalid_argument("expected a positive integer");
  return v;
}

double parse_double(std::string_view s) {
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size() || !std::isfinite(v)) {
    throw std::invalid_argument("expected a finite number");
  }
  return v;
}

bool parse_bool(std::string_view s) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("expected true or false");
}

template <typename T, typename F>
std::vector<T> parse_list(std::string_view s, F parse_item) {
  std::vector<T> out;
  while (true) {
    const auto comma = s.find(',');
    out.push_back(parse_item(trim(s.substr(0, comma))));
    if (comma == std::string_view::npos) break;
    s = s.substr(comma + 1);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

template <typename T, typename F>
std::string fmt_list(const std::vector<T>& xs, F fmt) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + fmt(xs[i]);
  return out;
}

std::string fmt_bool(bool b) { return b ? "true" : "false"; }

struct KeyDef {
  const char* key;
  const char* help;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      // data
      {"image_size", "square image side in pixels (corpus and model)",
       [](RunConfig& c, std::string_view v) { c.model.image_size = c.corpus.image_size = parse_positive(v); },
       [](const RunConfig& c) { return std::to_string(c.model.image_size); }},
      {"corpus_size", "number of procedural corpus images (half content, half style)",
       [](RunConfig& c, std::string_view v) { c.corpus.count = parse_positive(v); },
       [](const RunConfig& c) { return std::to_string(c.corpus.count); }},
      {"corpus_seed", "procedural corpus seed",
       [](RunConfig& c, std::string_view v) { c.corpus.seed = parse_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.corpus.seed); }},
      // codec
      {"codec", "identity | autoencoder",
       [](RunConfig& c, std::string_view v) {
         if (v == "identity") c.model.codec.mode = CodecMode::identity;
         else if (v == "autoencoder") c.model.codec.mode = CodecMode::autoencoder;
         else throw std::invalid_argument("expected identity or autoencoder");
       },
       [](const RunConfig& c) { return std::string(c.model.codec.mode == CodecMode::identity ? "identity" : "autoencoder"); }},
      {"latent_channels", "autoencoder latent channels",
       [](RunConfig& c, std::string_view v) { c.model.codec.latent_channels = parse_positive(v); },
       [](const RunConfig& c) { return std::to_string(c.model.codec.latent_channels); }},
      {"codec_factor", "autoencoder spatial reduction (power of two)",
       [](RunConfig& c, std::string_view v) {
         const auto f = parse_positive(v);
         if (f & (f - 1)) throw std::invalid_argument("expected a power of two");
         c.model.codec.factor = f;
       },
       [](const RunConfig& c) { return std::to_string(c.model.codec.factor); }},
      {"codec_width", "autoencoder hidden channels",
       [](RunConfig& c, std::string_view v) { c.model.codec.width = parse_positive(v); },
       [](const RunConfig& c) { return std::to_string(c.model.codec.width); }},
      {"codec_iterations", "autoencoder pretraining iterations",
       [](RunConfig& c, std::string_view v) { c.train.codec_iterations = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.train.codec_iterations); }},
      {"codec_batch_size", "autoencoder pretraining batch size",
       [](RunConfig& c, std::string_view v) { c.train.codec_batch_size = parse_positive(v); },
       [](const RunConfig& c) { return std::to_string(c.train.codec_batch_size); }},
      {"codec_learning_rate", "autoencoder pretraining learning rate",
       [](RunConfig& c, std::string_view v) { c.train.codec_learning_rate = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.codec_learning_rate); }},
      // conditioning
      {"extractor_channels", "style extractor channels per pyramid level",
       [](RunConfig& c, std::string_view v) { c.model.extractor.level_channels = parse_list<std::size_t>(v, parse_positive); },
       [](const RunConfig& c) { return fmt_list(c.model.extractor.level_channels, [](std::size_t x) { return std::to_string(x); }); }},
      {"extractor_kernel", "style extractor kernel size (odd)",
       [](RunConfig& c, std::string_view v) {
         const auto k = parse_positive(v);
         if (k % 2 == 0) throw std::invalid_argument("expected an odd kernel size");
         c.model.extractor.kernel = k;
       },
       [](const RunConfig& c) { return std::to_string(c.model.extractor.kernel); }},
      {"extractor_seed", "seed of the frozen style extractor weights",
       [](RunConfig& c, std::string_view v) { c.model.extractor.seed = parse_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.model.extractor.seed); }},
      {"refiner_channels", "refined content channels; 0 = floor(3/4 latent channels)",
       [](RunConfig& c, std::string_view v) { c.model.refiner_channels = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.model.refiner_channels); }},
      {"refiner_allow_full", "allow refined channels == latent channels (ablation only)",
       [](RunConfig& c, std::string_view v) { c.model.refiner_allow_full = parse_bool(v); },
       [](const RunConfig& c) { return fmt_bool(c.model.refiner_allow_full); }},
      // denoiser
      {"base_channels", "denoiser width at full resolution",
       [](RunConfig& c, std::string_view v) { c.model.denoiser.base_channels = parse_positive(v); },
       [](const RunConfig& c) { return std::to_string(c.model.denoiser.base_channels); }},
      {"channel_mult", "width multipliers per resolution level",
       [](RunConfig& c, std::string_view v) { c.model.denoiser.channel_mult = parse_list<std::size_t>(v, parse_positive); },
       [](const RunConfig& c) { return fmt_list(c.model.denoiser.channel_mult, [](std::size_t x) { return std::to_string(x); }); }},
      {"blocks_per_level", "adaLN-Zero blocks per level and path",
       [](RunConfig& c, std::string_view v) { c.model.denoiser.blocks_per_level = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.model.denoiser.blocks_per_level); }},
      {"embed_dim", "timestep/style embedding width (even)",
       [](RunConfig& c, std::string_view v) {
         const auto e = parse_positive(v);
         if (e % 2) throw std::invalid_argument("expected an even width");
         c.model.denoiser.embed_dim = e;
       },
       [](const RunConfig& c) { return std::to_string(c.model.denoiser.embed_dim); }},
      {"norm_groups", "group count of block normalization (capped at width)",
       [](RunConfig& c, std::string_view v) { c.model.denoiser.norm_groups = parse_positive(v); },
       [](const RunConfig& c) { return std::to_string(c.model.denoiser.norm_groups); }},
      {"attention", "self-attention blocks (unsupported; must be false)",
       [](RunConfig& c, std::string_view v) {
         if (parse_bool(v)) throw std::invalid_argument("attention blocks are not supported");
         c.model.denoiser.attention = false;
       },
       [](const RunConfig& c) { return fmt_bool(c.model.denoiser.attention); }},
      // diffusion
      {"timesteps", "diffusion horizon T",
       [](RunConfig& c, std::string_view v) { c.model.timesteps = parse_positive(v); },
       [](const RunConfig& c) { return std::to_string(c.model.timesteps); }},
      {"schedule", "noise schedule (linear only)",
       [](RunConfig&, std::string_view v) {
         if (v != "linear") throw std::invalid_argument("only the linear schedule is supported");
       },
       [](const RunConfig&) { return std::string("linear"); }},
      {"beta_start", "first beta of the linear schedule",
       [](RunConfig& c, std::string_view v) { c.model.beta_start = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.model.beta_start); }},
      {"beta_end", "last beta of the linear schedule",
       [](RunConfig& c, std::string_view v) { c.model.beta_end = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.model.beta_end); }},
      // training
      {"learning_rate", "AdamW learning rate",
       [](RunConfig& c, std::string_view v) { c.train.learning_rate = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.learning_rate); }},
      {"batch_size", "training batch size",
       [](RunConfig& c, std::string_view v) { c.train.batch_size = parse_positive(v); },
       [](const RunConfig& c) { return std::to_string(c.train.batch_size); }},
      {"iterations", "training iterations",
       [](RunConfig& c, std::string_view v) { c.train.iterations = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.train.iterations); }},
      {"weight_decay", "AdamW decoupled weight decay",
       [](RunConfig& c, std::string_view v) { c.train.weight_decay = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.weight_decay); }},
      {"adam_beta1", "AdamW first-moment decay",
       [](RunConfig& c, std::string_view v) { c.train.adam_beta1 = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.adam_beta1); }},
      {"adam_beta2", "AdamW second-moment decay",
       [](RunConfig& c, std::string_view v) { c.train.adam_beta2 = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.adam_beta2); }},
      {"adam_eps", "AdamW epsilon",
       [](RunConfig& c, std::string_view v) { c.train.adam_eps = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.adam_eps); }},
      {"p_content_only", "probability of dropping the style condition",
       [](RunConfig& c, std::string_view v) { c.train.p_content_only = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.p_content_only); }},
      {"p_style_only", "probability of dropping the content condition",
       [](RunConfig& c, std::string_view v) { c.train.p_style_only = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.p_style_only); }},
      {"ema_decay", "EMA decay of the sampling weights",
       [](RunConfig& c, std::string_view v) { c.train.ema_decay = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.train.ema_decay); }},
      {"ema_warmup", "cap the EMA decay at (1+n)/(10+n) after n updates",
       [](RunConfig& c, std::string_view v) { c.train.ema_warmup = parse_bool(v); },
       [](const RunConfig& c) { return fmt_bool(c.train.ema_warmup); }},
      {"train_seed", "training seed (overridden by --seed)",
       [](RunConfig& c, std::string_view v) { c.train.seed = parse_u64(v); },
       [](const RunConfig& c) { return std::to_string(c.train.seed); }},
      {"checkpoint_every", "iterations between checkpoints; 0 = final only",
       [](RunConfig& c, std::string_view v) { c.train.checkpoint_every = parse_size(v); },
       [](const RunConfig& c) { return std::to_string(c.train.checkpoint_every); }},
      {"dual_corpus", "draw content-only rows from content images, the rest from style images",
       [](RunConfig& c, std::string_view v) { c.train.dual_corpus = parse_bool(v); },
       [](const RunConfig& c) { return fmt_bool(c.train.dual_corpus); }},
      // sampling
      {"sampler", "ddim | ddpm",
       [](RunConfig& c, std::string_view v) {
         if (v == "ddim") c.sampling.spec.kind = SamplerKind::ddim;
         else if (v == "ddpm") c.sampling.spec.kind = SamplerKind::ddpm;
         else throw std::invalid_argument("expected ddim or ddpm");
       },
       [](const RunConfig& c) { return std::string(sampler_name(c.sampling.spec.kind)); }},
      {"sampling_steps", "reverse steps",
       [](RunConfig& c, std::string_view v) { c.sampling.spec.steps = parse_positive(v); },
       [](const RunConfig& c) { return std::to_string(c.sampling.spec.steps); }},
      {"ddpm_variance", "beta_tilde | beta",
       [](RunConfig& c, std::string_view v) {
         if (v == "beta_tilde") c.sampling.spec.variance = ReverseVariance::beta_tilde;
         else if (v == "beta") c.sampling.spec.variance = ReverseVariance::beta;
         else throw std::invalid_argument("expected beta_tilde or beta");
       },
       [](const RunConfig& c) {
         return std::string(c.sampling.spec.variance == ReverseVariance::beta ? "beta" : "beta_tilde");
       }},
      {"sample_batch", "denoiser rows per call while sampling",
       [](RunConfig& c, std::string_view v) { c.sampling.spec.max_batch = parse_positive(v); },
       [](const RunConfig& c) { return std::to_string(c.sampling.spec.max_batch); }},
      {"clip_x0", "clamp the x0 estimate while sampling: auto | off | bound",
       [](RunConfig& c, std::string_view v) {
         if (v == "auto") c.sampling.spec.clip_x0 = SamplerSpec::kClipAuto;
         else if (v == "off") c.sampling.spec.clip_x0 = 0.0;
         else {
           const double b = parse_double(v);
           if (!(b > 0.0)) throw std::invalid_argument("expected auto, off or a positive bound");
           c.sampling.spec.clip_x0 = b;
         }
       },
       [](const RunConfig& c) {
         const double b = c.sampling.spec.clip_x0;
         return b == SamplerSpec::kClipAuto ? std::string("auto") : b == 0.0 ? std::string("off") : fmt_double(b);
       }},
      {"scale_content", "content guidance scale",
       [](RunConfig& c, std::string_view v) { c.sampling.scales.content = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.sampling.scales.content); }},
      {"scale_style", "style guidance scale",
       [](RunConfig& c, std::string_view v) { c.sampling.scales.style = parse_double(v); },
       [](const RunConfig& c) { return fmt_double(c.sampling.scales.style); }},
      {"grid_content_scales", "content scales swept by `grid`",
       [](RunConfig& c, std::string_view v) { c.grid.content_scales = parse_list<double>(v, parse_double); },
       [](const RunConfig& c) { return fmt_list(c.grid.content_scales, fmt_double); }},
      {"grid_style_scales", "style scales swept by `grid`",
       [](RunConfig& c, std::string_view v) { c.grid.style_scales = parse_list<double>(v, parse_double); },
       [](const RunConfig& c) { return fmt_list(c.grid.style_scales, fmt_double); }},
  };
  return table;
}

void validate(const RunConfig& c) {
  c.train.validate();
  c.model.latent_shape();
  c.model.resolved_refiner();
  if (c.model.beta_start <= 0.0 || c.model.beta_end >= 1.0 || c.model.beta_start > c.model.beta_end) {
    throw std::invalid_argument("need 0 < beta_start <= beta_end < 1");
  }
  if (c.sampling.spec.steps > c.model.timesteps) throw std::invalid_argument("sampling_steps exceeds timesteps");
}

}  // namespace

RunConfig parse_config(std::string_view text) {
  RunConfig config;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    ++line_no;
    const auto nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
    pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = "line " + std::to_string(line_no) + ": ";
    if (eq == std::string_view::npos) throw ConfigError(where + "expected `key = value`");
    const std::string_view key = trim(line.substr(0, eq)), value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "missing key");
    if (value.empty()) throw ConfigError(where + "missing value for '" + std::string(key) + "'");
    const KeyDef* def = nullptr;
    for (const auto& k : key_table()) {
      if (key == k.key) def = &k;
    }
    if (!def) throw ConfigError(where + "unknown key '" + std::string(key) + "'");
    if (!seen.emplace(key).second) throw ConfigError(where + "duplicate key '" + std::string(key) + "'");
    try {
      def->set(config, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError(where + std::string(key) + " = " + std::string(value) + ": " + e.what());
    }
  }
  try {
    validate(config);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what());
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return parse_config(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

std::string serialize_config(const RunConfig& config) {
  std::string out;
  for (const auto& k : key_table()) out += std::string(k.key) + " = " + k.get(config) + "\n";
  return out;
}

std::vector<ConfigKeyInfo> config_keys() {
  const RunConfig defaults;
  std::vector<ConfigKeyInfo> out;
  for (const auto& k : key_table()) out.push_back({k.key, k.get(defaults), k.help});
  return out;
}

}  // namespace dualfusion
