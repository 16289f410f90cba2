#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "illumreid/nn.hpp"

namespace illumreid {

using Rgb = std::array<double, 3>;

// H x W x 3 image, channel-interleaved, values nominally in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(int h, int w, float fill = 0.0f)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, fill) {}

  float& at(int y, int x, int c) { return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  bool operator==(const Image&) const = default;
};

// Rounds every channel to the nearest 8-bit level, as a disk round trip would.
Image quantize8(const Image& img);

// Binary PPM (P6, maxval 255).
void write_ppm(const std::filesystem::path& path, const Image& img);
Image read_ppm(const std::filesystem::path& path);

// Packs images into an NCHW batch. With signed_range the values are mapped
// from [0,1] to [-1,1], the convention at every network boundary.
nn::Tensor to_batch(std::span<const Image* const> images, bool signed_range = true);
nn::Tensor to_batch(std::span<const Image> images, bool signed_range = true);
std::vector<Image> from_batch(const nn::Tensor& batch, bool signed_range = true);

// Deterministic 64-bit seed derivation (splitmix64 finaliser over seed ^ tag).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag);

}  // namespace illumreid
