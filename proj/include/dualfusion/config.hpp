#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "dualfusion/corpus.hpp"
#include "dualfusion/model.hpp"
#include "dualfusion/sampler.hpp"
#include "dualfusion/training.hpp"

namespace dualfusion {

struct SamplingDefaults {
  SamplerSpec spec;
  GuidanceScales scales;
};

struct GridConfig {
  std::vector<double> content_scales{0.15, 0.25, 0.5, 1.0, 2.0, 3.0, 4.0};
  std::vector<double> style_scales{0.15, 0.25, 0.5, 1.0, 3.0, 5.0, 7.0};
};

// Everything a run needs, read from a flat `key = value` file. '#' starts
// a comment; blank lines are ignored. Unknown, duplicate or malformed keys
// are rejected with the offending line number.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  ToyCorpusSpec corpus;
  SamplingDefaults sampling;
  GridConfig grid;
};

struct ConfigKeyInfo {
  std::string key;
  std::string default_value;
  std::string help;
};

RunConfig parse_config(std::string_view text);
RunConfig load_config(const std::filesystem::path& path);
// Complete `key = value` listing; parse_config(serialize_config(c)) == c.
std::string serialize_config(const RunConfig& config);
// All keys with their defaults, in file order.
std::vector<ConfigKeyInfo> config_keys();

}  // namespace dualfusion
