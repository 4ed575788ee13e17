#include "dualfusion/corpus.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "dualfusion/rng.hpp"

namespace dualfusion {

namespace {

using Color = std::array<double, 3>;

Color hsv(double h, double s, double v) {
  h = std::fmod(std::fmod(h, 360.0) + 360.0, 360.0) / 60.0;
  const double c = v * s, x = c * (1.0 - std::fabs(std::fmod(h, 2.0) - 1.0)), m = v - c;
  Color rgb{};
  switch (static_cast<int>(h)) {
    case 0: rgb = {c, x, 0}; break;
    case 1: rgb = {x, c, 0}; break;
    case 2: rgb = {0, c, x}; break;
    case 3: rgb = {0, x, c}; break;
    case 4: rgb = {x, 0, c}; break;
    default: rgb = {c, 0, x}; break;
  }
  return {255.0 * (rgb[0] + m), 255.0 * (rgb[1] + m), 255.0 * (rgb[2] + m)};
}

Color palette_color(Rng& rng, double hue_center, double hue_spread, double s_lo, double s_hi, double v_lo, double v_hi) {
  const double h = hue_center + hue_spread * (2.0 * rng.uniform() - 1.0);
  const double s = s_lo + (s_hi - s_lo) * rng.uniform();
  const double v = v_lo + (v_hi - v_lo) * rng.uniform();
  return hsv(h, s, v);
}

void put(ImageBuffer& img, std::size_t x, std::size_t y, const Color& c) {
  for (std::size_t k = 0; k < 3; ++k) img.at(x, y, k) = static_cast<std::uint8_t>(std::clamp(std::lround(c[k]), 0L, 255L));
}

Color lerp(const Color& a, const Color& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

ToyImage make_shapes(Rng& rng, std::size_t S) {
  ImageBuffer img(S, S);
  const Color c0 = palette_color(rng, 360.0 * rng.uniform(), 0.0, 0.1, 0.5, 0.3, 0.9);
  const Color c1 = palette_color(rng, 360.0 * rng.uniform(), 0.0, 0.1, 0.5, 0.3, 0.9);
  const double angle = 2.0 * std::numbers::pi * rng.uniform();
  const double dx = std::cos(angle), dy = std::sin(angle);
  const double half = 0.5 * static_cast<double>(S);
  for (std::size_t y = 0; y < S; ++y) {
    for (std::size_t x = 0; x < S; ++x) {
      const double t = 0.5 + 0.5 * ((static_cast<double>(x) - half) * dx + (static_cast<double>(y) - half) * dy) / half;
      put(img, x, y, lerp(c0, c1, std::clamp(t, 0.0, 1.0)));
    }
  }
  const auto shapes = rng.uniform_int(1, 3);
  std::ostringstream params;
  params << "gradient_angle=" << fmt(angle) << ";shapes=" << shapes;
  for (std::int64_t s = 0; s < shapes; ++s) {
    const Color c = palette_color(rng, 360.0 * rng.uniform(), 0.0, 0.2, 0.8, 0.2, 1.0);
    const double cx = S * (0.15 + 0.7 * rng.uniform()), cy = S * (0.15 + 0.7 * rng.uniform());
    const double r = S * (0.12 + 0.18 * rng.uniform());
    const bool circle = rng.uniform() < 0.5;
    params << ";" << (circle ? "circle" : "rect") << "=" << fmt(cx) << "/" << fmt(cy) << "/" << fmt(r);
    for (std::size_t y = 0; y < S; ++y) {
      for (std::size_t x = 0; x < S; ++x) {
        const double ddx = static_cast<double>(x) + 0.5 - cx, ddy = static_cast<double>(y) + 0.5 - cy;
        const bool inside = circle ? ddx * ddx + ddy * ddy <= r * r : std::fabs(ddx) <= r && std::fabs(ddy) <= 0.7 * r;
        if (inside) put(img, x, y, c);
      }
    }
  }
  return {"", CorpusFamily::content, "shapes", params.str(), std::move(img)};
}

// Hue bands per style kind: stripes warm, checker cool, blobs green.
ToyImage make_stripes(Rng& rng, std::size_t S) {
  ImageBuffer img(S, S);
  const std::size_t ncolors = static_cast<std::size_t>(rng.uniform_int(2, 3));
  std::vector<Color> pal;
  for (std::size_t i = 0; i < ncolors; ++i) pal.push_back(palette_color(rng, 20.0, 35.0, 0.6, 1.0, 0.4, 1.0));
  const double period = 3.0 + 5.0 * rng.uniform();
  const double angle = std::numbers::pi * rng.uniform();
  const double offset = period * rng.uniform();
  const double cx = std::cos(angle), cy = std::sin(angle);
  for (std::size_t y = 0; y < S; ++y) {
    for (std::size_t x = 0; x < S; ++x) {
      const double t = (static_cast<double>(x) * cx + static_cast<double>(y) * cy + offset) / period;
      const auto band = static_cast<std::int64_t>(std::floor(t * static_cast<double>(ncolors)));
      put(img, x, y, pal[static_cast<std::size_t>(((band % static_cast<std::int64_t>(ncolors)) + ncolors) % ncolors)]);
    }
  }
  return {"", CorpusFamily::style, "stripes",
          "colors=" + std::to_string(ncolors) + ";period=" + fmt(period) + ";angle=" + fmt(angle), std::move(img)};
}

ToyImage make_checker(Rng& rng, std::size_t S) {
  ImageBuffer img(S, S);
  const Color a = palette_color(rng, 215.0, 35.0, 0.5, 1.0, 0.2, 0.6);
  const Color b = palette_color(rng, 215.0, 35.0, 0.2, 0.7, 0.6, 1.0);
  const auto cell = static_cast<std::size_t>(rng.uniform_int(2, 6));
  const auto ox = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cell) - 1));
  const auto oy = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(cell) - 1));
  for (std::size_t y = 0; y < S; ++y) {
    for (std::size_t x = 0; x < S; ++x) put(img, x, y, (((x + ox) / cell + (y + oy) / cell) % 2) ? a : b);
  }
  return {"", CorpusFamily::style, "checker", "cell=" + std::to_string(cell), std::move(img)};
}

ToyImage make_blobs(Rng& rng, std::size_t S) {
  ImageBuffer img(S, S);
  const Color lo = palette_color(rng, 120.0, 40.0, 0.4, 0.9, 0.15, 0.5);
  const Color mid = palette_color(rng, 120.0, 40.0, 0.3, 0.8, 0.4, 0.8);
  const Color hi = palette_color(rng, 60.0, 30.0, 0.2, 0.6, 0.7, 1.0);
  const auto blobs = rng.uniform_int(3, 7);
  struct Blob { double x, y, s, w; };
  std::vector<Blob> bs;
  for (std::int64_t i = 0; i < blobs; ++i) {
    bs.push_back({S * rng.uniform(), S * rng.uniform(), S * (0.06 + 0.14 * rng.uniform()), 0.6 + 0.8 * rng.uniform()});
  }
  for (std::size_t y = 0; y < S; ++y) {
    for (std::size_t x = 0; x < S; ++x) {
      double v = 0.0;
      for (const auto& b : bs) {
        const double dx = static_cast<double>(x) - b.x, dy = static_cast<double>(y) - b.y;
        v += b.w * std::exp(-(dx * dx + dy * dy) / (2.0 * b.s * b.s));
      }
      const Color c = v < 0.35 ? lo : (v < 0.8 ? lerp(lo, mid, (v - 0.35) / 0.45) : lerp(mid, hi, std::min(1.0, (v - 0.8) / 0.6)));
      put(img, x, y, c);
    }
  }
  return {"", CorpusFamily::style, "blobs", "blobs=" + std::to_string(blobs), std::move(img)};
}

}  // namespace

const char* family_name(CorpusFamily family) { return family == CorpusFamily::content ? "content" : "style"; }

std::vector<std::size_t> ToyCorpus::indices(CorpusFamily family) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i].family == family) out.push_back(i);
  }
  return out;
}

ToyImage generate_toy_image(const ToyCorpusSpec& spec, std::size_t index) {
  Rng rng = Rng(spec.seed).fork(index);
  const std::size_t content_count = spec.count / 2;
  ToyImage img;
  if (index < content_count) {
    img = make_shapes(rng, spec.image_size);
  } else {
    switch ((index - content_count) % 3) {
      case 0: img = make_stripes(rng, spec.image_size); break;
      case 1: img = make_checker(rng, spec.image_size); break;
      default: img = make_blobs(rng, spec.image_size); break;
    }
  }
  char name[64];
  std::snprintf(name, sizeof name, "%05zu_%s", index, img.kind.c_str());
  img.name = name;
  return img;
}

ToyCorpus generate_toy_corpus(const ToyCorpusSpec& spec) {
  if (spec.count < 2 || spec.image_size < 4) throw InvalidArgument("toy corpus needs >= 2 images of size >= 4");
  ToyCorpus corpus{spec, {}};
  corpus.images.reserve(spec.count);
  for (std::size_t i = 0; i < spec.count; ++i) corpus.images.push_back(generate_toy_image(spec, i));
  return corpus;
}

void write_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create corpus directory " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.csv", std::ios::trunc);
  if (!manifest) throw IoError("cannot write " + (dir / "manifest.csv").string());
  manifest << "file,family,kind,params\n";
  for (const auto& img : corpus.images) {
    const std::string file = img.name + ".ppm";
    write_ppm(dir / file, img.image);
    manifest << file << ',' << family_name(img.family) << ',' << img.kind << ',' << img.params << '\n';
  }
  if (!manifest) throw IoError("failed writing corpus manifest");
}

}  // namespace dualfusion
