#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "dqa/bfen/model.hpp"

namespace dqa {

// FLOP convention: a multiply-accumulate counts as 2 operations; pooling,
// activations, sigmoid and element-wise sums/products count 1 per output
// element; bias additions are not counted.
std::uint64_t conv_flops(int kernel, int in_channels, int out_channels, int out_height, int out_width);
// A transposed convolution costs as much as the convolution it is the adjoint of.
std::uint64_t conv_transpose_flops(int kernel, int in_channels, int out_channels, int in_height, int in_width);
std::uint64_t linear_flops(int in, int out);

enum class CostKind { conv, conv_transpose, pooled_conv, linear, pool, activation, elementwise };

struct LayerCost {
  std::string name;
  CostKind kind = CostKind::conv;
  std::uint64_t flops = 0;
};

struct FlopReport {
  int height = 0;
  int width = 0;
  std::vector<LayerCost> layers;

  std::uint64_t total() const;
  // Spatial convolutions only (regular and transposed).
  std::uint64_t spatial_conv_total() const;
};

std::uint64_t count_params(const bfen::Model& model);
FlopReport count_flops(const bfen::Model& model, int height, int width);

// Sequential single-image predictions after `warmup` discarded runs.
double benchmark_throughput(const bfen::Model& model, int height, int width, int n_images, int warmup = 1);

struct ComplexityReport {
  int height = 0;
  int width = 0;
  std::uint64_t param_count = 0;
  std::uint64_t flops = 0;
  double images_per_sec = 0.0;  // 0 when not measured
  std::string environment;
};

std::string hardware_note();
// Structured text with M (1e6) and B (1e9) units.
void write_complexity_report(std::ostream& out, const ComplexityReport& report);

}  // namespace dqa
