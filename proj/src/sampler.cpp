#include "dualfusion/sampler.hpp"

#include <cmath>
#include <cstdlib>
#include <exception>
#include <numeric>
#include <thread>

#include "dualfusion/errors.hpp"

namespace dualfusion {

const char* sampler_name(SamplerKind kind) { return kind == SamplerKind::ddpm ? "ddpm" : "ddim"; }

Tensor cfg2d(const Tensor& dual, const Tensor& style_only, const Tensor& content_only, const GuidanceScales& scales) {
  if (dual.shape() != style_only.shape() || dual.shape() != content_only.shape()) {
    throw InvalidArgument("cfg2d: prediction shapes differ");
  }
  const double a = scales.content + scales.style - 1.0, b = scales.content - 1.0, c = scales.style - 1.0;
  auto d = dual.data(), s = style_only.data(), k = content_only.data();
  std::vector<double> out(d.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * d[i] - b * s[i] - c * k[i];
  return Tensor(dual.shape(), std::move(out));
}

StyleFeatures style_of(const DualModel& model, const Tensor& style_image) {
  NoGradGuard no_grad;
  return model.extractor().extract(style_image);
}

Tensor latent_mask(const DualModel& model, const SpatialMask& mask) {
  const Shape latent = model.config().latent_shape();
  const std::size_t h = latent[1], w = latent[2];
  Tensor m = mask.values;
  if (!m.defined() || m.rank() != 2) throw InvalidArgument("mask must be a 2-D grid");
  for (double v : m.data()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("mask values must lie in [0, 1]");
  }
  if (m.dim(0) == h && m.dim(1) == w) return m;
  if (m.dim(0) % h || m.dim(1) % w || m.dim(0) / h != m.dim(1) / w) {
    throw InvalidArgument("mask " + shape_str(m.shape()) + " does not reduce to the latent grid [" +
                          std::to_string(h) + "," + std::to_string(w) + "]");
  }
  const std::size_t f = m.dim(0) / h;
  std::vector<double> out(h * w, 0.0);
  auto src = m.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double acc = 0.0;
      for (std::size_t dy = 0; dy < f; ++dy) {
        for (std::size_t dx = 0; dx < f; ++dx) acc += src[(y * f + dy) * m.dim(1) + x * f + dx];
      }
      out[y * w + x] = acc / static_cast<double>(f * f);
    }
  }
  return Tensor({h, w}, std::move(out));
}

namespace {

struct Job {
  const GuidedRequest* request = nullptr;
  Tensor refined;  // [C_r,h,w], zeros for style visualization
  Tensor mask;     // [h,w] or undefined
  std::vector<double> weights;
  Rng rng{0};
  Tensor z;
};

struct Query {
  std::size_t job;
  ConditionMode mode;
  std::size_t style;
};

void validate_request(const GuidedRequest& r, const DualModel& model) {
  if (r.styles.empty()) throw InvalidArgument("sampling request needs at least one style");
  const std::size_t D = model.extractor().feature_length();
  for (const auto& s : r.styles) {
    if (s.values.shape() != Shape{D}) throw InvalidArgument("style features must have length " + std::to_string(D));
  }
  if (!std::isfinite(r.scales.content) || !std::isfinite(r.scales.style)) {
    throw InvalidArgument("guidance scales must be finite");
  }
  if (!r.content.defined() && r.styles.size() != 1) {
    throw InvalidArgument("style visualization takes exactly one style");
  }
  if (!r.weights.empty()) {
    if (r.weights.size() != r.styles.size()) throw InvalidArgument("one weight per style required");
    const double sum = std::accumulate(r.weights.begin(), r.weights.end(), 0.0);
    if (std::abs(sum - 1.0) > 1e-9) throw InvalidArgument("style weights must sum to 1 (got " + std::to_string(sum) + ")");
  }
  if (r.mask.defined()) {
    if (r.styles.size() != 2) throw InvalidArgument("a spatial mask blends exactly two styles");
    if (!r.weights.empty()) throw InvalidArgument("a request takes either weights or a mask, not both");
  }
}

}  // namespace

std::vector<SampleResult> run_guided(const DualModel& model, std::span<const GuidedRequest> requests,
                                     const SamplerSpec& spec) {
  NoGradGuard no_grad;
  if (spec.steps == 0) throw InvalidArgument("sampler needs at least one step");
  const Schedule& base = model.schedule();
  const std::size_t T = base.steps();
  if (spec.steps > T) throw InvalidArgument("sampler steps exceed the training horizon");
  const Shape latent = model.config().latent_shape();
  const Shape refined_shape{model.refiner().config().refined_channels, latent[1], latent[2]};

  std::vector<Job> jobs(requests.size());
  for (std::size_t j = 0; j < requests.size(); ++j) {
    const GuidedRequest& r = requests[j];
    validate_request(r, model);
    Job& job = jobs[j];
    job.request = &r;
    if (r.content.defined()) {
      Shape one{1};
      one.insert(one.end(), r.content.shape().begin(), r.content.shape().end());
      job.refined = ops::row(model.refine(model.encode(r.content.reshape(one))), 0);
    } else {
      job.refined = Tensor(refined_shape, 0.0);
    }
    if (r.mask.defined()) job.mask = latent_mask(model, SpatialMask{r.mask});
    job.weights = r.weights.empty() ? std::vector<double>{1.0} : r.weights;
    job.rng = Rng(r.seed);
    job.z = Tensor::randn(latent, job.rng);
  }

  std::vector<Query> queries;
  for (std::size_t j = 0; j < jobs.size(); ++j) {
    const GuidedRequest& r = *jobs[j].request;
    for (std::size_t s = 0; s < r.styles.size(); ++s) {
      if (r.content.defined()) {
        queries.push_back({j, ConditionMode::dual, s});
        queries.push_back({j, ConditionMode::style_only, s});
        queries.push_back({j, ConditionMode::content_only, s});
      } else {
        queries.push_back({j, ConditionMode::style_only, s});
      }
    }
  }

  const std::vector<std::size_t> descending = sampling_timesteps(T, spec.steps);
  std::vector<std::size_t> ascending(descending.rbegin(), descending.rend());
  const Schedule ddpm_schedule = spec.steps == T ? base : respace(base, ascending);
  const std::size_t chunk = std::max<std::size_t>(1, spec.max_batch);
  double clip = spec.clip_x0;
  if (clip == SamplerSpec::kClipAuto) clip = model.config().codec.mode == CodecMode::identity ? 1.0 : 3.0;
  if (!(clip >= 0.0)) throw InvalidArgument("clip_x0 must be auto, 0 or positive");

  std::vector<Tensor> predictions(queries.size());
  for (std::size_t i = 0; i < descending.size(); ++i) {
    const std::size_t t = descending[i];
    for (std::size_t start = 0; start < queries.size(); start += chunk) {
      const std::size_t end = std::min(queries.size(), start + chunk);
      std::vector<Tensor> zs, refs, styles;
      std::vector<ConditionMode> modes;
      for (std::size_t q = start; q < end; ++q) {
        const Job& job = jobs[queries[q].job];
        zs.push_back(job.z);
        refs.push_back(job.refined);
        styles.push_back(job.request->styles[queries[q].style].values);
        modes.push_back(queries[q].mode);
      }
      const std::vector<std::size_t> ts(end - start, t);
      const Tensor eps = model.predict(ops::stack(zs), ops::stack(refs), ops::stack(styles), modes, ts);
      for (std::size_t q = start; q < end; ++q) predictions[q] = ops::row(eps, q - start);
    }

    std::size_t q = 0;
    for (Job& job : jobs) {
      const GuidedRequest& r = *job.request;
      std::vector<Tensor> guided;
      for (std::size_t s = 0; s < r.styles.size(); ++s) {
        if (r.content.defined()) {
          guided.push_back(cfg2d(predictions[q], predictions[q + 1], predictions[q + 2], r.scales));
          q += 3;
        } else {
          guided.push_back(predictions[q++]);
        }
      }
      Tensor eps;
      if (job.mask.defined()) {
        auto a = guided[0].data(), b = guided[1].data(), m = job.mask.data();
        const std::size_t plane = m.size();
        std::vector<double> out(a.size());
        for (std::size_t k = 0; k < out.size(); ++k) {
          const double mk = m[k % plane];
          out[k] = mk * a[k] + (1.0 - mk) * b[k];
        }
        eps = Tensor(guided[0].shape(), std::move(out));
      } else if (guided.size() == 1 && job.weights[0] == 1.0) {
        eps = guided[0];
      } else {
        std::vector<double> out(guided[0].numel());
        auto g0 = guided[0].data();
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = job.weights[0] * g0[k];
        for (std::size_t s = 1; s < guided.size(); ++s) {
          auto g = guided[s].data();
          for (std::size_t k = 0; k < out.size(); ++k) out[k] = out[k] + job.weights[s] * g[k];
        }
        eps = Tensor(guided[0].shape(), std::move(out));
      }
      // alpha_bar of the respaced step equals the base value at t, so the
      // base schedule serves both samplers here.
      if (clip > 0.0) eps = clip_denoised_eps(job.z, t, eps, base, clip);
      if (spec.kind == SamplerKind::ddim) {
        const std::size_t t_next = i + 1 < descending.size() ? descending[i + 1] : 0;
        job.z = ddim_step(job.z, t, t_next, eps, base);
      } else {
        job.z = ddpm_step(job.z, descending.size() - i, eps, ddpm_schedule, job.rng, spec.variance);
      }
    }
  }

  std::vector<SampleResult> results;
  results.reserve(jobs.size());
  for (const Job& job : jobs) {
    Shape one{1};
    one.insert(one.end(), latent.begin(), latent.end());
    results.push_back({ops::row(model.decode(job.z.reshape(one)), 0), job.z});
  }
  return results;
}

namespace {

SampleResult run_one(const DualModel& model, GuidedRequest request, const SamplerSpec& spec) {
  std::vector<GuidedRequest> one{std::move(request)};
  return run_guided(model, one, spec).front();
}

}  // namespace

SampleResult stylize(const DualModel& model, const Tensor& content_image, const Tensor& style_image,
                     const GuidanceScales& scales, const SamplerSpec& spec, std::uint64_t seed) {
  GuidedRequest r;
  r.content = content_image;
  r.styles = {style_of(model, style_image)};
  r.scales = scales;
  r.seed = seed;
  return run_one(model, std::move(r), spec);
}

SampleResult style_visualize(const DualModel& model, const Tensor& style_image, const SamplerSpec& spec,
                             std::uint64_t seed) {
  GuidedRequest r;
  r.styles = {style_of(model, style_image)};
  r.seed = seed;
  return run_one(model, std::move(r), spec);
}

SampleResult interpolate_styles(const DualModel& model, const Tensor& content_image, const StyleMix& mix,
                                const GuidanceScales& scales, const SamplerSpec& spec, std::uint64_t seed) {
  if (mix.weights.size() != mix.styles.size() || mix.styles.empty()) {
    throw InvalidArgument("style mix needs one weight per style");
  }
  GuidedRequest r;
  r.content = content_image;
  r.styles = mix.styles;
  r.weights = mix.weights;
  r.scales = scales;
  r.seed = seed;
  return run_one(model, std::move(r), spec);
}

SampleResult spatial_blend(const DualModel& model, const Tensor& content_image, const Tensor& style_a,
                           const Tensor& style_b, const SpatialMask& mask, const GuidanceScales& scales,
                           const SamplerSpec& spec, std::uint64_t seed) {
  GuidedRequest r;
  r.content = content_image;
  r.styles = {style_of(model, style_a), style_of(model, style_b)};
  r.mask = mask.values;
  r.scales = scales;
  r.seed = seed;
  return run_one(model, std::move(r), spec);
}

std::vector<SampleResult> run_guided_parallel(const DualModel& model, std::span<const GuidedRequest> requests,
                                              const SamplerSpec& spec, std::size_t threads) {
  const std::size_t n = requests.size();
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) return run_guided(model, requests, spec);
  std::vector<SampleResult> out(n);
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < threads; ++w) {
    const std::size_t lo = n * w / threads, hi = n * (w + 1) / threads;
    pool.emplace_back([&, w, lo, hi] {
      try {
        auto part = run_guided(model, requests.subspan(lo, hi - lo), spec);
        std::move(part.begin(), part.end(), out.begin() + static_cast<std::ptrdiff_t>(lo));
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

std::size_t thread_budget() {
  if (const char* env = std::getenv("DUALFUSION_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<std::size_t>(v);
    throw InvalidArgument(std::string("DUALFUSION_THREADS must be a positive integer, got '") + env + "'");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

std::vector<GridCell> guidance_grid(std::span<const double> content_scales, std::span<const double> style_scales,
                                    const GuidanceScales& fixed, std::uint64_t base_seed) {
  std::vector<GridCell> cells;
  for (std::size_t i = 0; i < content_scales.size(); ++i) {
    cells.push_back({0, i, {content_scales[i], fixed.style}, 0});
  }
  for (std::size_t i = 0; i < style_scales.size(); ++i) {
    cells.push_back({1, i, {fixed.content, style_scales[i]}, 0});
  }
  for (std::size_t k = 0; k < cells.size(); ++k) cells[k].seed = base_seed + k;
  return cells;
}

}  // namespace dualfusion
