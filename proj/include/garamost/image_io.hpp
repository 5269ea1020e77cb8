#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "garamost/tensor.hpp"

namespace garamost {

// Grayscale image with values in [0, 1]. maxval is the bit depth it was
// loaded from (or will be stored at): 255 or 65535, or any value in 1..65535.
struct Image {
  std::int64_t width = 0;
  std::int64_t height = 0;
  int maxval = 255;
  std::vector<float> pixels;  // row-major

  Image() = default;
  Image(std::int64_t w, std::int64_t h, int max = 255)
      : width(w), height(h), maxval(max), pixels(static_cast<std::size_t>(w * h), 0.0f) {}

  float& at(std::int64_t x, std::int64_t y) { return pixels[static_cast<std::size_t>(y * width + x)]; }
  float at(std::int64_t x, std::int64_t y) const { return pixels[static_cast<std::size_t>(y * width + x)]; }
};

// Binary PGM (P5). Samples are 1 byte when maxval < 256, otherwise 2 bytes
// big-endian. Throws ParseError with the byte offset on malformed input.
Image decode_pgm(const std::string& bytes);
std::string encode_pgm(const Image& image);
Image load_pgm(const std::filesystem::path& path);
void save_pgm(const Image& image, const std::filesystem::path& path);

// Sequence directories hold frame_0000.pgm, frame_0001.pgm, ...
std::filesystem::path frame_path(const std::filesystem::path& dir, std::size_t index);
void save_sequence(const std::vector<Image>& frames, const std::filesystem::path& dir);
std::vector<Image> load_sequence(const std::filesystem::path& dir);

TensorF image_to_tensor(const Image& image);
// Stacks equally sized images along N.
TensorF images_to_tensor(const std::vector<const Image*>& images);
// Takes sample n of an N x 1 x H x W tensor.
Image tensor_to_image(const TensorF& t, std::int64_t n = 0, int maxval = 255);

}  // namespace garamost
