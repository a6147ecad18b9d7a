#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace dqa::bfen {

struct Shape3 {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t plane() const { return static_cast<std::size_t>(height) * static_cast<std::size_t>(width); }
  std::size_t size() const { return static_cast<std::size_t>(channels) * plane(); }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

// Channels x height x width, row-major within each channel plane.
struct FeatureMap {
  Shape3 shape;
  std::vector<double> data;

  FeatureMap() = default;
  explicit FeatureMap(Shape3 s) : shape(s), data(s.size(), 0.0) {}
  FeatureMap(int c, int h, int w) : FeatureMap(Shape3{c, h, w}) {}

  int channels() const { return shape.channels; }
  int height() const { return shape.height; }
  int width() const { return shape.width; }
  std::size_t size() const { return data.size(); }

  double& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x]; }
  double at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * shape.height + y) * shape.width + x];
  }

  std::span<double> span() { return data; }
  std::span<const double> span() const { return data; }
};

}  // namespace dqa::bfen
