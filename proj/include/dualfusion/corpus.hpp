#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dualfusion/image.hpp"

namespace dualfusion {

enum class CorpusFamily { content, style };

// Procedural stand-in for a photo/artwork corpus. The first half of the
// images are content compositions (gradient background plus solid shapes);
// the second half cycle through style textures (stripes, checker, blobs),
// each drawing its palette from a hue band characteristic of the kind.
struct ToyCorpusSpec {
  std::size_t count = 512;
  std::size_t image_size = 32;
  std::uint64_t seed = 7;
};

struct ToyImage {
  std::string name;
  CorpusFamily family;
  std::string kind;    // shapes | stripes | checker | blobs
  std::string params;  // generator parameters, ';'-separated key=value
  ImageBuffer image;
};

struct ToyCorpus {
  ToyCorpusSpec spec;
  std::vector<ToyImage> images;

  std::vector<std::size_t> indices(CorpusFamily family) const;
};

// Pure function of the spec: image i depends only on (seed, i, size).
ToyCorpus generate_toy_corpus(const ToyCorpusSpec& spec);
ToyImage generate_toy_image(const ToyCorpusSpec& spec, std::size_t index);

// Writes <dir>/<name>.ppm for every image and <dir>/manifest.csv with
// columns file,family,kind,params.
void write_toy_corpus(const ToyCorpus& corpus, const std::filesystem::path& dir);

const char* family_name(CorpusFamily family);

}  // namespace dualfusion
