#include "illumreid/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>

#include "illumreid/errors.hpp"

namespace illumreid {

Image quantize8(const Image& img) {
  Image out = img;
  for (auto& v : out.pixels) {
    v = static_cast<float>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f)) / 255.0f;
  }
  return out;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw ValidationError("cannot open " + path.string() + " for writing");
  os << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<unsigned char> bytes(img.pixels.size());
  for (std::size_t i = 0; i < bytes.size(); ++i) {
    bytes[i] = static_cast<unsigned char>(std::lround(std::clamp(img.pixels[i], 0.0f, 1.0f) * 255.0f));
  }
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw ValidationError("failed writing " + path.string());
}

Image read_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open image " + path.string());
  std::string magic;
  int w = 0;
  int h = 0;
  int maxval = 0;
  is >> magic >> w >> h >> maxval;
  if (magic != "P6" || w <= 0 || h <= 0 || maxval != 255) {
    throw ValidationError("unsupported image format in " + path.string());
  }
  is.get();
  Image img(h, w);
  std::vector<unsigned char> bytes(img.pixels.size());
  is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (is.gcount() != static_cast<std::streamsize>(bytes.size())) {
    throw ValidationError("truncated image " + path.string());
  }
  for (std::size_t i = 0; i < bytes.size(); ++i) img.pixels[i] = bytes[i] / 255.0f;
  return img;
}

nn::Tensor to_batch(std::span<const Image* const> images, bool signed_range) {
  if (images.empty()) return {};
  const int h = images.front()->height;
  const int w = images.front()->width;
  nn::Tensor t(static_cast<int>(images.size()), 3, h, w);
  for (int i = 0; i < static_cast<int>(images.size()); ++i) {
    const Image& img = *images[i];
    if (img.height != h || img.width != w) {
      throw ValidationError("to_batch: images of different sizes");
    }
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) {
          const float v = img.at(y, x, c);
          t.at(i, c, y, x) = signed_range ? 2.0f * v - 1.0f : v;
        }
  }
  return t;
}

nn::Tensor to_batch(std::span<const Image> images, bool signed_range) {
  std::vector<const Image*> ptrs;
  ptrs.reserve(images.size());
  for (const auto& img : images) ptrs.push_back(&img);
  return to_batch(std::span<const Image* const>(ptrs), signed_range);
}

std::vector<Image> from_batch(const nn::Tensor& batch, bool signed_range) {
  if (batch.c() != 3) throw ValidationError("from_batch: expected 3 channels");
  std::vector<Image> out;
  out.reserve(batch.n());
  for (int i = 0; i < batch.n(); ++i) {
    Image img(batch.h(), batch.w());
    for (int y = 0; y < batch.h(); ++y)
      for (int x = 0; x < batch.w(); ++x)
        for (int c = 0; c < 3; ++c) {
          const float v = batch.at(i, c, y, x);
          img.at(y, x, c) = signed_range ? 0.5f * (v + 1.0f) : v;
        }
    out.push_back(std::move(img));
  }
  return out;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag) {
  std::uint64_t z = seed ^ (tag * 0x9E3779B97F4A7C15ULL);
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace illumreid
