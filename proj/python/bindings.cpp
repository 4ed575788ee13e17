#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dualfusion/checkpoint.hpp"
#include "dualfusion/corpus.hpp"
#include "dualfusion/errors.hpp"
#include "dualfusion/metrics.hpp"
#include "dualfusion/pipeline.hpp"
#include "dualfusion/sampler.hpp"

namespace py = pybind11;
using namespace dualfusion;

namespace {

using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;
using U8Array = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const F64Array& a) {
  Shape shape(a.shape(), a.shape() + a.ndim());
  return Tensor(std::move(shape), std::vector<double>(a.data(), a.data() + a.size()));
}

F64Array to_numpy(const Tensor& t) {
  F64Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

// HxWx3 uint8 <-> ImageBuffer
U8Array image_to_numpy(const ImageBuffer& img) {
  U8Array out({img.height, img.width, std::size_t{3}});
  std::copy(img.samples.begin(), img.samples.end(), out.mutable_data());
  return out;
}

ImageBuffer numpy_to_image(const U8Array& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw InvalidArgument("expected an HxWx3 uint8 array");
  ImageBuffer img(a.shape(1), a.shape(0));
  std::copy(a.data(), a.data() + a.size(), img.samples.begin());
  return img;
}

SamplerSpec make_spec(const std::string& sampler, std::size_t steps) {
  if (sampler != "ddim" && sampler != "ddpm") throw InvalidArgument("sampler must be 'ddim' or 'ddpm'");
  SamplerSpec spec;
  spec.kind = sampler == "ddpm" ? SamplerKind::ddpm : SamplerKind::ddim;
  spec.steps = steps;
  return spec;
}

// A loaded checkpoint; images are [3,H,W] float arrays in [-1,1].
class PyModel {
 public:
  explicit PyModel(const std::filesystem::path& path) : lm_(load_model(path)) {}

  std::size_t image_size() const { return lm_.config.model.image_size; }
  std::uint64_t iteration() const { return lm_.iteration; }
  std::string config_text() const { return serialize_config(lm_.config); }

  F64Array stylize(const F64Array& content, const F64Array& style, std::pair<double, double> scales,
                   std::uint64_t seed, std::size_t steps, const std::string& sampler) const {
    const Tensor c = to_tensor(content), s = to_tensor(style);
    const SamplerSpec spec = make_spec(sampler, steps);
    Tensor out;
    {
      py::gil_scoped_release release;
      out = dualfusion::stylize(*lm_.model, c, s, {scales.first, scales.second}, spec, seed).image;
    }
    return to_numpy(out);
  }

  F64Array style_visualize(const F64Array& style, std::uint64_t seed, std::size_t steps,
                           const std::string& sampler) const {
    return to_numpy(dualfusion::style_visualize(*lm_.model, to_tensor(style), make_spec(sampler, steps), seed).image);
  }

  F64Array interpolate(const F64Array& content, const std::vector<F64Array>& styles, const std::vector<double>& weights,
                       std::pair<double, double> scales, std::uint64_t seed, std::size_t steps) const {
    StyleMix mix;
    for (const auto& s : styles) mix.styles.push_back(style_of(*lm_.model, to_tensor(s)));
    mix.weights = weights;
    return to_numpy(interpolate_styles(*lm_.model, to_tensor(content), mix, {scales.first, scales.second},
                                       make_spec("ddim", steps), seed)
                        .image);
  }

  F64Array blend(const F64Array& content, const F64Array& style_a, const F64Array& style_b, const F64Array& mask,
                 std::pair<double, double> scales, std::uint64_t seed, std::size_t steps) const {
    return to_numpy(spatial_blend(*lm_.model, to_tensor(content), to_tensor(style_a), to_tensor(style_b),
                                  {to_tensor(mask)}, {scales.first, scales.second}, make_spec("ddim", steps), seed)
                        .image);
  }

  F64Array style_features(const F64Array& image) const { return to_numpy(style_of(*lm_.model, to_tensor(image)).values); }

 private:
  LoadedModel lm_;
};

}  // namespace

PYBIND11_MODULE(_dualfusion, m) {
  m.doc() = "Dual-conditional latent diffusion style transfer (desk scale)";

  py::register_exception<InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("default_config", [] { return serialize_config(RunConfig{}); }, "Complete default config text.");
  m.def("normalize_config", [](const std::string& text) { return serialize_config(parse_config(text)); },
        py::arg("text"), "Parse and re-serialize config text (validates it).");
  m.def("config_keys", [] {
    std::vector<std::tuple<std::string, std::string, std::string>> out;
    for (const auto& k : config_keys()) out.emplace_back(k.key, k.default_value, k.help);
    return out;
  });

  m.def(
      "alpha_bars",
      [](std::size_t steps, double beta_start, double beta_end) {
        const Schedule s = linear_schedule(steps, beta_start, beta_end);
        std::vector<double> out;
        for (std::size_t t = 0; t <= steps; ++t) out.push_back(s.alpha_bar(t));
        return out;
      },
      py::arg("steps") = 1000, py::arg("beta_start") = 1e-4, py::arg("beta_end") = 0.02,
      "alpha_bar(t) for t = 0..T of the linear schedule (alpha_bar(0) = 1).");
  m.def("sampling_timesteps", &sampling_timesteps, py::arg("total_steps"), py::arg("count"));
  m.def(
      "cfg2d",
      [](const F64Array& dual, const F64Array& style_only, const F64Array& content_only,
         std::pair<double, double> scales) {
        return to_numpy(cfg2d(to_tensor(dual), to_tensor(style_only), to_tensor(content_only),
                              {scales.first, scales.second}));
      },
      py::arg("dual"), py::arg("style_only"), py::arg("content_only"), py::arg("scales"));

  m.def(
      "toy_corpus",
      [](std::size_t count, std::size_t image_size, std::uint64_t seed) {
        const ToyCorpus c = generate_toy_corpus({count, image_size, seed});
        py::list out;
        for (const auto& img : c.images) {
          out.append(py::dict(py::arg("name") = img.name, py::arg("family") = family_name(img.family),
                              py::arg("kind") = img.kind, py::arg("params") = img.params,
                              py::arg("image") = image_to_numpy(img.image)));
        }
        return out;
      },
      py::arg("count") = 512, py::arg("image_size") = 32, py::arg("seed") = 7);

  m.def("read_ppm", [](const std::filesystem::path& p) { return image_to_numpy(read_ppm(p)); });
  m.def("write_ppm", [](const std::filesystem::path& p, const U8Array& a) { write_ppm(p, numpy_to_image(a)); });
  m.def("image_to_tensor", [](const U8Array& a) { return to_numpy(image_to_tensor(numpy_to_image(a))); },
        "HxWx3 uint8 -> 3xHxW float in [-1,1].");
  m.def("tensor_to_image", [](const F64Array& t) { return image_to_numpy(tensor_to_image(to_tensor(t))); },
        "3xHxW float -> HxWx3 uint8 (clamped).");
  m.def(
      "style_stat_distance",
      [](const U8Array& a, const U8Array& b) {
        const StyleExtractor ex;
        return style_stat_distance(ex, numpy_to_image(a), numpy_to_image(b));
      },
      py::arg("a"), py::arg("b"), "Style statistics distance under the default extractor.");

  m.def(
      "train",
      [](const std::string& config_text, const std::filesystem::path& out_dir) {
        const RunConfig cfg = parse_config(config_text);
        TrainingSummary s;
        {
          py::gil_scoped_release release;
          s = run_training(cfg, out_dir);
        }
        std::vector<double> losses;
        for (const auto& st : s.steps) losses.push_back(st.loss);
        return py::make_tuple(losses, s.codec_losses, s.checkpoints);
      },
      py::arg("config_text"), py::arg("out_dir"),
      "Train on the toy corpus; returns (losses, codec_losses, checkpoint paths).");

  py::class_<PyModel>(m, "Model")
      .def(py::init<const std::filesystem::path&>(), py::arg("checkpoint"))
      .def_property_readonly("image_size", &PyModel::image_size)
      .def_property_readonly("iteration", &PyModel::iteration)
      .def_property_readonly("config_text", &PyModel::config_text)
      .def("stylize", &PyModel::stylize, py::arg("content"), py::arg("style"),
           py::arg("scales") = std::pair<double, double>{0.6, 3.0}, py::arg("seed") = 0, py::arg("steps") = 250,
           py::arg("sampler") = "ddim")
      .def("style_visualize", &PyModel::style_visualize, py::arg("style"), py::arg("seed") = 0,
           py::arg("steps") = 250, py::arg("sampler") = "ddim")
      .def("interpolate", &PyModel::interpolate, py::arg("content"), py::arg("styles"), py::arg("weights"),
           py::arg("scales") = std::pair<double, double>{0.6, 3.0}, py::arg("seed") = 0, py::arg("steps") = 250)
      .def("blend", &PyModel::blend, py::arg("content"), py::arg("style_a"), py::arg("style_b"), py::arg("mask"),
           py::arg("scales") = std::pair<double, double>{0.6, 3.0}, py::arg("seed") = 0, py::arg("steps") = 250)
      .def("style_features", &PyModel::style_features, py::arg("image"));
}
