#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dualfusion/errors.hpp"
#include "dualfusion/parameters.hpp"

namespace dualfusion {

// Binary layout (all integers little-endian):
//   "DCLDM1"                      6-byte magic
//   u16 version                   currently 1
//   u32 length, bytes             UTF-8 key=value text: config echo + "ckpt.*" metadata
//   u32 tensor count
//   per tensor: u32 name length, name bytes, u32 rank, rank x u64 extents,
//               payload as little-endian IEEE-754 binary32
inline constexpr char kCheckpointMagic[6] = {'D', 'C', 'L', 'D', 'M', '1'};
inline constexpr std::uint16_t kCheckpointVersion = 1;

class CheckpointError : public IoError {
 public:
  enum class Kind { truncated, bad_magic, version_mismatch, name_collision, missing_tensor, io };
  CheckpointError(Kind kind, const std::string& message);
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct StoredTensor {
  std::string name;
  Shape shape;
  std::vector<float> values;
};

struct Checkpoint {
  std::uint16_t version = kCheckpointVersion;
  std::string config_text;
  std::map<std::string, std::string> meta;  // serialized as "ckpt.<key>=<value>" lines
  std::vector<StoredTensor> tensors;

  // Stores values rounded to binary32; rejects duplicate names.
  void add(const std::string& name, const Tensor& tensor);
  void add_all(const ParameterSet& set, const std::string& prefix);
  bool contains(const std::string& name) const;
  Tensor tensor(const std::string& name) const;
  // All tensors whose name starts with `prefix`, prefix stripped, as doubles.
  ParameterSet group(const std::string& prefix) const;
  std::uint64_t meta_u64(const std::string& key, std::uint64_t fallback = 0) const;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dualfusion
