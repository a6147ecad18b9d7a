#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "dqa/bfen/tensor.hpp"

// Layer primitives with explicit backward passes. Weight layouts:
//   convolution            [out][in][k][k]
//   transposed convolution [in][out][k][k]
// Backward functions accumulate into the provided gradient buffers.
namespace dqa::bfen::ops {

struct ConvGeometry {
  int kernel = 1;
  int stride = 1;
  int pad = 0;
};

int conv_output_size(int input, const ConvGeometry& g);

void conv2d_forward(std::span<const double> in, Shape3 in_shape, std::span<const double> weight,
                    std::span<const double> bias, int out_channels, const ConvGeometry& g,
                    FeatureMap& out);

void conv2d_backward(std::span<const double> in, Shape3 in_shape, std::span<const double> weight,
                     const FeatureMap& grad_out, const ConvGeometry& g, std::span<double> grad_weight,
                     std::span<double> grad_bias, std::span<double> grad_in);

// Output spatial size is in * stride for the kernel = 2 * stride, pad = stride / 2 family.
void conv_transpose_forward(const FeatureMap& in, std::span<const double> weight, std::span<const double> bias,
                            int out_channels, const ConvGeometry& g, Shape3 out_shape, FeatureMap& out);

void conv_transpose_backward(const FeatureMap& in, std::span<const double> weight, const FeatureMap& grad_out,
                             const ConvGeometry& g, std::span<double> grad_weight, std::span<double> grad_bias,
                             std::span<double> grad_in);

void relu_inplace(std::span<double> v);
// grad *= (activation > 0)
void relu_backward(std::span<const double> activation, std::span<double> grad);

double sigmoid(double x);

// 2x2 window, stride 2. `argmax` receives the flat input index of each output.
FeatureMap max_pool2(const FeatureMap& in, std::vector<std::uint32_t>& argmax);
void max_pool2_backward(const FeatureMap& grad_out, const std::vector<std::uint32_t>& argmax, FeatureMap& grad_in);

FeatureMap avg_pool2(const FeatureMap& in);
void avg_pool2_backward(const FeatureMap& grad_out, FeatureMap& grad_in);

// Spatial pyramid max pooling over the listed square grids. Cell (a, b) of a
// g x g grid spans rows [floor(a*h/g), ceil((a+1)*h/g)) and likewise columns.
// Output layout: per channel, grid cells of each level in order, row-major.
std::vector<double> spp_forward(const FeatureMap& in, std::span<const int> grids, std::vector<std::uint32_t>& argmax);
void spp_backward(std::span<const double> grad_out, const std::vector<std::uint32_t>& argmax, FeatureMap& grad_in);

}  // namespace dqa::bfen::ops
