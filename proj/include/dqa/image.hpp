#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace dqa {

// 8-bit RGB raster, row-major, channels interleaved.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> pixels;  // height * width * 3

  Image() = default;
  Image(int h, int w) : height(h), width(w), pixels(static_cast<std::size_t>(h) * w * 3, 0) {}

  std::uint8_t& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }
  std::uint8_t at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  bool empty() const { return pixels.empty(); }
  friend bool operator==(const Image&, const Image&) = default;
};

// PNG, BMP, TIFF and the PNM family. JPEG and other lossy containers are refused.
bool is_lossless_format(const std::filesystem::path& path);

// Decodes to 8-bit RGB; grayscale inputs are replicated to three channels.
// Throws IntegrityError when the file is missing, lossy or undecodable.
Image load_image(const std::filesystem::path& path);

void save_image(const std::filesystem::path& path, const Image& image);

}  // namespace dqa
