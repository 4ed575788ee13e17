#include "dualfusion/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

namespace dualfusion {

static_assert(std::numeric_limits<float>::is_iec559, "binary32 floats required");

CheckpointError::CheckpointError(Kind kind, const std::string& message) : IoError(message), kind_(kind) {}

void Checkpoint::add(const std::string& name, const Tensor& tensor) {
  if (contains(name)) throw CheckpointError(CheckpointError::Kind::name_collision, "checkpoint: duplicate tensor '" + name + "'");
  StoredTensor st{name, tensor.shape(), {}};
  st.values.reserve(tensor.numel());
  for (double v : tensor.data()) st.values.push_back(static_cast<float>(v));
  tensors.push_back(std::move(st));
}

void Checkpoint::add_all(const ParameterSet& set, const std::string& prefix) {
  for (const auto& [name, t] : set) add(prefix + name, t);
}

bool Checkpoint::contains(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return true;
  }
  return false;
}

Tensor Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return Tensor(t.shape, std::vector<double>(t.values.begin(), t.values.end()));
  }
  throw CheckpointError(CheckpointError::Kind::missing_tensor, "checkpoint: no tensor named '" + name + "'");
}

ParameterSet Checkpoint::group(const std::string& prefix) const {
  ParameterSet out;
  for (const auto& t : tensors) {
    if (t.name.starts_with(prefix)) {
      out.add(t.name.substr(prefix.size()), Tensor(t.shape, std::vector<double>(t.values.begin(), t.values.end())));
    }
  }
  return out;
}

std::uint64_t Checkpoint::meta_u64(const std::string& key, std::uint64_t fallback) const {
  auto it = meta.find(key);
  return it == meta.end() ? fallback : std::stoull(it->second);
}

namespace {

class Writer {
 public:
  template <typename T>
  void put(T value) {
    static_assert(std::is_integral_v<T>);
    for (std::size_t i = 0; i < sizeof(T); ++i) bytes.push_back(static_cast<std::uint8_t>(value >> (8 * i)));
  }
  void put_f32(float f) { put(std::bit_cast<std::uint32_t>(f)); }
  void put_bytes(std::string_view s) { bytes.insert(bytes.end(), s.begin(), s.end()); }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  template <typename T>
  T get(const char* what) {
    need(sizeof(T), what);
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<T>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(T);
    return v;
  }
  std::string get_string(std::size_t n, const char* what) {
    need(n, what);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw CheckpointError(CheckpointError::Kind::truncated, std::string("checkpoint truncated while reading ") + what);
    }
  }
  bool at_end() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  std::set<std::string> names;
  for (const auto& t : ckpt.tensors) {
    if (!names.insert(t.name).second) {
      throw CheckpointError(CheckpointError::Kind::name_collision, "checkpoint: duplicate tensor '" + t.name + "'");
    }
    if (shape_numel(t.shape) != t.values.size()) throw InvalidArgument("checkpoint: tensor '" + t.name + "' size mismatch");
  }
  std::string blob = ckpt.config_text;
  if (!blob.empty() && blob.back() != '\n') blob.push_back('\n');
  for (const auto& [k, v] : ckpt.meta) blob += "ckpt." + k + "=" + v + "\n";

  Writer w;
  w.put_bytes(std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic)));
  w.put<std::uint16_t>(ckpt.version);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(blob.size()));
  w.put_bytes(blob);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.name.size()));
    w.put_bytes(t.name);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.shape.size()));
    for (auto e : t.shape) w.put<std::uint64_t>(e);
    for (float f : t.values) w.put_f32(f);
  }
  return std::move(w.bytes);
}

Checkpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (r.get_string(sizeof(kCheckpointMagic), "magic") != std::string_view(kCheckpointMagic, sizeof(kCheckpointMagic))) {
    throw CheckpointError(CheckpointError::Kind::bad_magic, "checkpoint: bad magic");
  }
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint16_t>("version");
  if (ckpt.version != kCheckpointVersion) {
    throw CheckpointError(CheckpointError::Kind::version_mismatch,
                          "checkpoint: version " + std::to_string(ckpt.version) + " (expected " +
                              std::to_string(kCheckpointVersion) + ")");
  }
  const auto blob_len = r.get<std::uint32_t>("config length");
  const std::string blob = r.get_string(blob_len, "config blob");
  std::istringstream lines(blob);
  for (std::string line; std::getline(lines, line);) {
    if (line.starts_with("ckpt.")) {
      const auto eq = line.find('=');
      if (eq != std::string::npos) ckpt.meta[line.substr(5, eq - 5)] = line.substr(eq + 1);
    } else {
      ckpt.config_text += line + "\n";
    }
  }
  const auto count = r.get<std::uint32_t>("tensor count");
  std::set<std::string> names;
  for (std::uint32_t i = 0; i < count; ++i) {
    StoredTensor t;
    t.name = r.get_string(r.get<std::uint32_t>("name length"), "tensor name");
    if (!names.insert(t.name).second) {
      throw CheckpointError(CheckpointError::Kind::name_collision, "checkpoint: duplicate tensor '" + t.name + "'");
    }
    const auto rank = r.get<std::uint32_t>("rank");
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      const auto e = r.get<std::uint64_t>("extent");
      if (e == 0) throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint: zero extent in '" + t.name + "'");
      t.shape.push_back(static_cast<std::size_t>(e));
      n *= static_cast<std::size_t>(e);
    }
    r.need(n * 4, "tensor payload");
    t.values.reserve(n);
    for (std::size_t k = 0; k < n; ++k) t.values.push_back(std::bit_cast<float>(r.get<std::uint32_t>("payload")));
    ckpt.tensors.push_back(std::move(t));
  }
  if (!r.at_end()) throw CheckpointError(CheckpointError::Kind::truncated, "checkpoint: trailing bytes after tensor table");
  return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto bytes = serialize_checkpoint(ckpt);
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError(CheckpointError::Kind::io, "short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw CheckpointError(CheckpointError::Kind::io, "cannot move checkpoint into place: " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace dualfusion
