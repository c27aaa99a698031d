#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace xma {

/// Interleaved 8-bit image, row-major, 1, 3, or 4 channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(int w, int h, int c)
      : width(w), height(h), channels(c),
        pixels(static_cast<std::size_t>(w) * h * c, 0) {}

  std::uint8_t& at(int x, int y, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool empty() const { return pixels.empty(); }
  double mean_intensity() const;

  friend bool operator==(const Image&, const Image&) = default;
};

/// Decodes any format the codec backend understands. Throws MediaError.
Image load_image(const std::filesystem::path& path);
Image decode_image(const std::vector<std::uint8_t>& bytes);

/// Lossless PNG with fixed encoder settings, so equal images give equal
/// bytes.
std::vector<std::uint8_t> encode_png(const Image& image);
void save_png(const Image& image, const std::filesystem::path& path);

}  // namespace xma
