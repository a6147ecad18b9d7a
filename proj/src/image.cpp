#include "dqa/image.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <string>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dqa/error.hpp"

namespace dqa {

bool is_lossless_format(const std::filesystem::path& path) {
  static constexpr std::array<const char*, 8> kExtensions = {".png", ".bmp", ".tif", ".tiff",
                                                            ".ppm", ".pgm", ".pnm", ".pbm"};
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return std::find(kExtensions.begin(), kExtensions.end(), ext) != kExtensions.end();
}

Image load_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) {
    throw IntegrityError("image not found: " + path.string());
  }
  if (!is_lossless_format(path)) {
    throw IntegrityError("not a lossless image format: " + path.string());
  }
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw IntegrityError("cannot decode image: " + path.string());
  }
  if (bgr.depth() != CV_8U) {
    bgr.convertTo(bgr, CV_8U);
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  Image out(rgb.rows, rgb.cols);
  for (int y = 0; y < rgb.rows; ++y) {
    const auto* row = rgb.ptr<std::uint8_t>(y);
    std::copy(row, row + static_cast<std::ptrdiff_t>(rgb.cols) * 3,
              out.pixels.begin() + static_cast<std::ptrdiff_t>(y) * rgb.cols * 3);
  }
  return out;
}

void save_image(const std::filesystem::path& path, const Image& image) {
  if (!is_lossless_format(path)) {
    throw PreconditionError("refusing to write lossy image: " + path.string());
  }
  cv::Mat rgb(image.height, image.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.pixels.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path.string(), bgr)) {
    throw Error("failed to write image: " + path.string());
  }
}

}  // namespace dqa
