#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>

#include "doctest.h"
#include "dualfusion/config.hpp"
#include "dualfusion/corpus.hpp"
#include "dualfusion/image.hpp"
#include "dualfusion/metrics.hpp"
#include "dualfusion/ops.hpp"

using namespace dualfusion;

namespace {

std::vector<std::uint8_t> bytes_of(std::string_view s) { return {s.begin(), s.end()}; }

ImageFormatError::Kind ppm_error(std::string_view s) {
  try {
    decode_ppm(bytes_of(s));
  } catch (const ImageFormatError& e) {
    return e.kind();
  }
  FAIL("no error");
  return ImageFormatError::Kind::io;
}

}  // namespace

TEST_CASE("portable pixmaps") {
  SUBCASE("1x1 white pixel: 11 header bytes plus 3 samples") {
    ImageBuffer img(1, 1);
    img.samples = {255, 255, 255};
    const auto bytes = encode_ppm(img);
    CHECK(bytes.size() == 14);
    CHECK(std::string(bytes.begin(), bytes.begin() + 11) == "P6\n1 1\n255\n");
    CHECK(decode_ppm(bytes) == img);
  }
  SUBCASE("round trip, comments, and a payload that starts with whitespace") {
    ImageBuffer img(3, 2);
    for (std::size_t i = 0; i < img.samples.size(); ++i) img.samples[i] = static_cast<std::uint8_t>(i * 37);
    img.samples[0] = '\n';
    CHECK(decode_ppm(encode_ppm(img)) == img);
    std::string commented = "P6 # rgb\n3 # width\n2\n255\n";
    commented.append(img.samples.begin(), img.samples.end());
    CHECK(decode_ppm(bytes_of(commented)) == img);
  }
  SUBCASE("distinct errors") {
    CHECK(ppm_error("P3\n1 1\n255\n\x01\x02\x03") == ImageFormatError::Kind::bad_magic);
    CHECK(ppm_error("P6\n1 1\n65535\n\x01\x02\x03") == ImageFormatError::Kind::bad_maxval);
    CHECK(ppm_error("P6\n1 1\n255\n\x01\x02") == ImageFormatError::Kind::short_payload);
    CHECK(ppm_error("P6\n1 x\n255\n") == ImageFormatError::Kind::malformed_header);
  }
  SUBCASE("graymap masks map to [0,1]") {
    GrayBuffer g{2, 1, {0, 255}};
    CHECK(decode_pgm(encode_pgm(g)) == g);
    const Tensor m = gray_to_mask(g);
    CHECK(m.shape() == Shape{1, 2});
    CHECK(m.at(0) == 0.0);
    CHECK(m.at(1) == 1.0);
  }
  SUBCASE("tensor conversion round trips every byte value") {
    ImageBuffer img(16, 16);
    for (std::size_t i = 0; i < img.samples.size(); ++i) img.samples[i] = static_cast<std::uint8_t>(i % 256);
    CHECK(tensor_to_image(image_to_tensor(img)) == img);
    const ImageBuffer clamped = tensor_to_image(Tensor({3, 1, 1}, {-5.0, 5.0, 0.0}));
    CHECK(clamped.samples == std::vector<std::uint8_t>{0, 255, 128});
  }
}

TEST_CASE("config parsing") {
  SUBCASE("empty text gives defaults") {
    const RunConfig c = parse_config("");
    CHECK(c.train.p_content_only == 0.1);
    CHECK(c.train.p_style_only == 0.5);
    CHECK(c.model.timesteps == 1000);
    CHECK(c.sampling.scales.content == 0.6);
    CHECK(c.sampling.scales.style == 3.0);
    CHECK(c.sampling.spec.steps == 250);
    CHECK(c.sampling.spec.kind == SamplerKind::ddim);
    CHECK(c.train.ema_decay == 0.9999);
    CHECK(c.model.denoiser.base_channels == 64);
    CHECK(c.sampling.spec.clip_x0 == SamplerSpec::kClipAuto);
    CHECK(parse_config("clip_x0=off\n").sampling.spec.clip_x0 == 0.0);
    CHECK(parse_config("clip_x0=2.5\n").sampling.spec.clip_x0 == 2.5);
  }
  SUBCASE("values, comments, whitespace") {
    const RunConfig c = parse_config(
        "# dropout\np_style_only=0.5\n  p_content_only = 0.1  # trailing\n\ntimesteps=1000\nschedule=linear\n"
        "channel_mult = 1, 2,4\ncodec = autoencoder\n");
    CHECK(c.train.p_style_only == 0.5);
    CHECK(c.train.p_content_only == 0.1);
    CHECK(c.model.timesteps == 1000);
    CHECK(c.model.denoiser.channel_mult == std::vector<std::size_t>{1, 2, 4});
    CHECK(c.model.codec.mode == CodecMode::autoencoder);
  }
  SUBCASE("line-numbered errors") {
    auto message = [](std::string_view text) {
      try {
        parse_config(text);
      } catch (const ConfigError& e) {
        return std::string(e.what());
      }
      return std::string("no error");
    };
    CHECK(message("timesteps=10\nbogus=1\n").starts_with("line 2: unknown key"));
    CHECK(message("batch_size=4\n\nbatch_size=8\n").starts_with("line 3: duplicate key"));
    CHECK(message("learning_rate=fast\n").starts_with("line 1: learning_rate"));
    CHECK(message("\n\njust words\n").starts_with("line 3: expected"));
    CHECK(message("schedule=cosine\n").find("linear") != std::string::npos);
    CHECK(message("p_content_only=0.6\np_style_only=0.6\n").starts_with("invalid configuration"));
    CHECK(message("clip_x0=-2\n").starts_with("line 1: clip_x0"));
  }
  SUBCASE("serialization round trips") {
    RunConfig c = parse_config("learning_rate=0.00031\ngrid_style_scales=0.1,7\nbase_channels=24\n");
    const std::string text = serialize_config(c);
    CHECK(serialize_config(parse_config(text)) == text);
    CHECK(config_keys().size() > 40);
  }
}

TEST_CASE("toy corpus") {
  ToyCorpusSpec spec;
  SUBCASE("deterministic, half content and half style, generated quickly") {
    const auto t0 = std::chrono::steady_clock::now();
    const ToyCorpus a = generate_toy_corpus(spec);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(secs < 10.0);
    const ToyCorpus b = generate_toy_corpus(spec);
    REQUIRE(a.images.size() == 512);
    for (std::size_t i = 0; i < a.images.size(); ++i) CHECK(a.images[i].image == b.images[i].image);
    CHECK(a.indices(CorpusFamily::content).size() == 256);
    CHECK(a.indices(CorpusFamily::style).size() == 256);
    CHECK(generate_toy_image(spec, 300).image == a.images[300].image);
  }
  SUBCASE("written files and manifest") {
    ToyCorpusSpec small{6, 32, 3};
    const auto dir = std::filesystem::temp_directory_path() / "dualfusion_corpus_test";
    std::filesystem::remove_all(dir);
    const ToyCorpus c = generate_toy_corpus(small);
    write_toy_corpus(c, dir);
    std::ifstream manifest(dir / "manifest.csv");
    std::string header;
    std::getline(manifest, header);
    CHECK(header == "file,family,kind,params");
    CHECK(read_ppm(dir / (c.images[4].name + ".ppm")) == c.images[4].image);
    std::filesystem::remove_all(dir);
  }
}

TEST_CASE("style statistics distance") {
  const ToyCorpus corpus = generate_toy_corpus({});
  const StyleExtractor ex;
  const auto& imgs = corpus.images;
  SUBCASE("zero on identical images, symmetric, rejects size mismatch") {
    CHECK(style_stat_distance(ex, imgs[300].image, imgs[300].image) == 0.0);
    CHECK(style_stat_distance(ex, imgs[300].image, imgs[301].image) ==
          style_stat_distance(ex, imgs[301].image, imgs[300].image));
    CHECK_THROWS(style_stat_distance(ex, imgs[0].image, ImageBuffer(16, 16)));
  }
  SUBCASE("stripes and checkers differ at the first level") {
    std::size_t stripe = 0, checker = 0;
    for (std::size_t i : corpus.indices(CorpusFamily::style)) {
      if (!stripe && imgs[i].kind == "stripes") stripe = i;
      if (!checker && imgs[i].kind == "checker") checker = i;
    }
    const auto maps_a = ex.feature_maps(image_to_tensor(imgs[stripe].image).reshape({1, 3, 32, 32}));
    const auto maps_b = ex.feature_maps(image_to_tensor(imgs[checker].image).reshape({1, 3, 32, 32}));
    const Tensor va = ops::channel_var(maps_a[0]), vb = ops::channel_var(maps_b[0]);
    const Tensor ma = ops::channel_mean(maps_a[0]), mb = ops::channel_mean(maps_b[0]);
    double d2 = 0;
    for (std::size_t i = 0; i < va.numel(); ++i) {
      d2 += (va.at(i) - vb.at(i)) * (va.at(i) - vb.at(i)) + (ma.at(i) - mb.at(i)) * (ma.at(i) - mb.at(i));
    }
    CHECK(d2 > 0.0);
  }
  SUBCASE("within-kind distances are smaller than between-kind distances") {
    const auto style = corpus.indices(CorpusFamily::style);
    std::vector<Tensor> feats;
    for (std::size_t k = 0; k < 60; ++k) feats.push_back(ex.extract(image_to_tensor(imgs[style[k]].image)).values);
    double within = 0, between = 0;
    std::size_t nw = 0, nb = 0;
    for (std::size_t a = 0; a < feats.size(); ++a) {
      for (std::size_t b = a + 1; b < feats.size(); ++b) {
        const double d = feature_distance(feats[a].data(), feats[b].data());
        if (imgs[style[a]].kind == imgs[style[b]].kind) within += d, ++nw;
        else between += d, ++nb;
      }
    }
    CHECK(within / nw < between / nb);
  }
}
