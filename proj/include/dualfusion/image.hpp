#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dualfusion/errors.hpp"
#include "dualfusion/tensor.hpp"

namespace dualfusion {

// 8-bit interleaved RGB, row-major.
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> samples;  // 3 * width * height

  ImageBuffer() = default;
  ImageBuffer(std::size_t w, std::size_t h) : width(w), height(h), samples(3 * w * h, 0) {}
  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return samples[3 * (y * width + x) + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return samples[3 * (y * width + x) + c]; }
  bool operator==(const ImageBuffer&) const = default;
};

// 8-bit single channel, row-major.
struct GrayBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> samples;
  bool operator==(const GrayBuffer&) const = default;
};

class ImageFormatError : public IoError {
 public:
  enum class Kind { bad_magic, bad_maxval, short_payload, malformed_header, io };
  ImageFormatError(Kind kind, const std::string& message) : IoError(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Binary portable pixmap (P6) / graymap (P5) with maxval 255. Header tokens
// are separated by whitespace and may carry '#' comments; exactly one
// whitespace byte separates maxval from the payload.
ImageBuffer decode_ppm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_ppm(const ImageBuffer& image);
GrayBuffer decode_pgm(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> encode_pgm(const GrayBuffer& image);

ImageBuffer read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ImageBuffer& image);
GrayBuffer read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const GrayBuffer& image);

// [0,255] -> [-1,1] as s / 127.5 - 1; result is [3,H,W].
Tensor image_to_tensor(const ImageBuffer& image);
// [-1,1] -> [0,255] with clamping and round-half-up; input [3,H,W].
ImageBuffer tensor_to_image(const Tensor& chw);
// Values s / 255 in [0,1]; result is [H,W].
Tensor gray_to_mask(const GrayBuffer& image);

// Tiles equally sized images into rows; short rows are padded with black.
// `gap` black pixels separate neighbouring tiles.
ImageBuffer montage(const std::vector<std::vector<ImageBuffer>>& rows, std::size_t gap = 1);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace dualfusion
