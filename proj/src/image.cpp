#include "dualfusion/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>

namespace dualfusion {

namespace {

struct Header {
  std::size_t width, height, payload_offset;
};

Header parse_header(std::span<const std::uint8_t> bytes, char kind) {
  using K = ImageFormatError::Kind;
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != static_cast<std::uint8_t>(kind)) {
    throw ImageFormatError(K::bad_magic, std::string("expected P") + kind + " magic");
  }
  std::size_t pos = 2;
  auto next_token = [&](const char* what) -> std::size_t {
    for (;;) {
      if (pos >= bytes.size()) throw ImageFormatError(K::malformed_header, std::string("header ends before ") + what);
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    std::size_t value = 0, digits = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      value = value * 10 + (bytes[pos++] - '0');
      if (++digits > 9) throw ImageFormatError(K::malformed_header, std::string(what) + " too large");
    }
    if (digits == 0) throw ImageFormatError(K::malformed_header, std::string("expected ") + what);
    return value;
  };
  const std::size_t w = next_token("width");
  const std::size_t h = next_token("height");
  const std::size_t maxval = next_token("maxval");
  if (w == 0 || h == 0) throw ImageFormatError(K::malformed_header, "zero image extent");
  if (maxval != 255) throw ImageFormatError(K::bad_maxval, "maxval " + std::to_string(maxval) + " (only 255 supported)");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    throw ImageFormatError(K::malformed_header, "missing whitespace after maxval");
  }
  return {w, h, pos + 1};
}

std::string header_text(char kind, std::size_t w, std::size_t h) {
  return std::string("P") + kind + "\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
}

}  // namespace

ImageBuffer decode_ppm(std::span<const std::uint8_t> bytes) {
  const Header hdr = parse_header(bytes, '6');
  ImageBuffer img;
  img.width = hdr.width;
  img.height = hdr.height;
  const std::size_t n = 3 * hdr.width * hdr.height;
  if (bytes.size() - hdr.payload_offset < n) {
    throw ImageFormatError(ImageFormatError::Kind::short_payload,
                           "payload has " + std::to_string(bytes.size() - hdr.payload_offset) + " bytes, need " +
                               std::to_string(n));
  }
  img.samples.assign(bytes.begin() + hdr.payload_offset, bytes.begin() + hdr.payload_offset + n);
  return img;
}

std::vector<std::uint8_t> encode_ppm(const ImageBuffer& image) {
  if (image.samples.size() != 3 * image.width * image.height) throw InvalidArgument("ppm: sample count mismatch");
  const std::string hdr = header_text('6', image.width, image.height);
  std::vector<std::uint8_t> out(hdr.begin(), hdr.end());
  out.insert(out.end(), image.samples.begin(), image.samples.end());
  return out;
}

GrayBuffer decode_pgm(std::span<const std::uint8_t> bytes) {
  const Header hdr = parse_header(bytes, '5');
  GrayBuffer img{hdr.width, hdr.height, {}};
  const std::size_t n = hdr.width * hdr.height;
  if (bytes.size() - hdr.payload_offset < n) {
    throw ImageFormatError(ImageFormatError::Kind::short_payload, "pgm payload too short");
  }
  img.samples.assign(bytes.begin() + hdr.payload_offset, bytes.begin() + hdr.payload_offset + n);
  return img;
}

std::vector<std::uint8_t> encode_pgm(const GrayBuffer& image) {
  if (image.samples.size() != image.width * image.height) throw InvalidArgument("pgm: sample count mismatch");
  const std::string hdr = header_text('5', image.width, image.height);
  std::vector<std::uint8_t> out(hdr.begin(), hdr.end());
  out.insert(out.end(), image.samples.begin(), image.samples.end());
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageFormatError(ImageFormatError::Kind::io, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ImageFormatError(ImageFormatError::Kind::io, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ImageFormatError(ImageFormatError::Kind::io, "short write to " + path.string());
}

ImageBuffer read_ppm(const std::filesystem::path& path) { return decode_ppm(read_file_bytes(path)); }
void write_ppm(const std::filesystem::path& path, const ImageBuffer& image) { write_file_bytes(path, encode_ppm(image)); }
GrayBuffer read_pgm(const std::filesystem::path& path) { return decode_pgm(read_file_bytes(path)); }
void write_pgm(const std::filesystem::path& path, const GrayBuffer& image) { write_file_bytes(path, encode_pgm(image)); }

Tensor image_to_tensor(const ImageBuffer& image) {
  const std::size_t W = image.width, H = image.height;
  std::vector<double> out(3 * W * H);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) out[(c * H + y) * W + x] = image.at(x, y, c) / 127.5 - 1.0;
    }
  }
  return Tensor({3, H, W}, std::move(out));
}

ImageBuffer tensor_to_image(const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) throw InvalidArgument("tensor_to_image: expected [3,H,W], got " + shape_str(chw.shape()));
  const std::size_t H = chw.dim(1), W = chw.dim(2);
  ImageBuffer img(W, H);
  auto d = chw.data();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < H; ++y) {
      for (std::size_t x = 0; x < W; ++x) {
        const double s = std::floor((d[(c * H + y) * W + x] + 1.0) * 127.5 + 0.5);
        img.at(x, y, c) = static_cast<std::uint8_t>(std::clamp(s, 0.0, 255.0));
      }
    }
  }
  return img;
}

Tensor gray_to_mask(const GrayBuffer& image) {
  std::vector<double> out(image.samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = image.samples[i] / 255.0;
  return Tensor({image.height, image.width}, std::move(out));
}

ImageBuffer montage(const std::vector<std::vector<ImageBuffer>>& rows, std::size_t gap) {
  std::size_t cols = 0, w = 0, h = 0;
  for (const auto& row : rows) {
    cols = std::max(cols, row.size());
    for (const auto& img : row) {
      if (w == 0) w = img.width, h = img.height;
      if (img.width != w || img.height != h) throw InvalidArgument("montage: tiles differ in size");
    }
  }
  if (cols == 0) throw InvalidArgument("montage: no tiles");
  ImageBuffer out(cols * w + (cols - 1) * gap, rows.size() * h + (rows.size() - 1) * gap);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < rows[r].size(); ++c) {
      const ImageBuffer& img = rows[r][c];
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          for (std::size_t k = 0; k < 3; ++k) out.at(c * (w + gap) + x, r * (h + gap) + y, k) = img.at(x, y, k);
        }
      }
    }
  }
  return out;
}

}  // namespace dualfusion
