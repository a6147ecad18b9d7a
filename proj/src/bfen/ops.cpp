#include "dqa/bfen/ops.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>

#include <Eigen/Core>

#include "dqa/error.hpp"

namespace dqa::bfen::ops {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using MutMap = Eigen::Map<RowMatrix>;

// Rows are (channel, ky, kx); columns are output positions.
void im2col(const double* in, Shape3 s, const ConvGeometry& g, int out_h, int out_w, double* col) {
  const std::size_t positions = static_cast<std::size_t>(out_h) * out_w;
  std::size_t row = 0;
  for (int c = 0; c < s.channels; ++c) {
    const double* plane = in + static_cast<std::size_t>(c) * s.plane();
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx, ++row) {
        double* dst = col + row * positions;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= s.height) {
            std::fill(dst, dst + out_w, 0.0);
            dst += out_w;
            continue;
          }
          const double* src_row = plane + static_cast<std::size_t>(iy) * s.width;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * g.stride - g.pad + kx;
            *dst++ = (ix >= 0 && ix < s.width) ? src_row[ix] : 0.0;
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatters column entries back onto the (accumulated) image.
void col2im(const double* col, Shape3 s, const ConvGeometry& g, int out_h, int out_w, double* img) {
  const std::size_t positions = static_cast<std::size_t>(out_h) * out_w;
  std::size_t row = 0;
  for (int c = 0; c < s.channels; ++c) {
    double* plane = img + static_cast<std::size_t>(c) * s.plane();
    for (int ky = 0; ky < g.kernel; ++ky) {
      for (int kx = 0; kx < g.kernel; ++kx, ++row) {
        const double* src = col + row * positions;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * g.stride - g.pad + ky;
          if (iy < 0 || iy >= s.height) {
            src += out_w;
            continue;
          }
          double* dst_row = plane + static_cast<std::size_t>(iy) * s.width;
          for (int ox = 0; ox < out_w; ++ox, ++src) {
            const int ix = ox * g.stride - g.pad + kx;
            if (ix >= 0 && ix < s.width) dst_row[ix] += *src;
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

}  // namespace

int conv_output_size(int input, const ConvGeometry& g) { return (input + 2 * g.pad - g.kernel) / g.stride + 1; }

void conv2d_forward(std::span<const double> in, Shape3 in_shape, std::span<const double> weight,
                    std::span<const double> bias, int out_channels, const ConvGeometry& g, FeatureMap& out) {
  const int oh = conv_output_size(in_shape.height, g);
  const int ow = conv_output_size(in_shape.width, g);
  if (oh < 1 || ow < 1) throw PreconditionError("convolution input smaller than its kernel");
  const auto patch = static_cast<Eigen::Index>(in_shape.channels) * g.kernel * g.kernel;
  const auto positions = static_cast<Eigen::Index>(oh) * ow;
  assert(weight.size() == static_cast<std::size_t>(out_channels * patch));
  assert(in.size() >= in_shape.size());

  out = FeatureMap(out_channels, oh, ow);
  ConstMap w(weight.data(), out_channels, patch);
  MutMap o(out.data.data(), out_channels, positions);
  if (is_pointwise(g)) {
    o.noalias() = w * ConstMap(in.data(), patch, positions);
  } else {
    std::vector<double> col(static_cast<std::size_t>(patch * positions));
    im2col(in.data(), in_shape, g, oh, ow, col.data());
    o.noalias() = w * ConstMap(col.data(), patch, positions);
  }
  if (!bias.empty()) {
    for (int c = 0; c < out_channels; ++c) o.row(c).array() += bias[static_cast<std::size_t>(c)];
  }
}

void conv2d_backward(std::span<const double> in, Shape3 in_shape, std::span<const double> weight,
                     const FeatureMap& grad_out, const ConvGeometry& g, std::span<double> grad_weight,
                     std::span<double> grad_bias, std::span<double> grad_in) {
  const int out_channels = grad_out.channels();
  const int oh = grad_out.height();
  const int ow = grad_out.width();
  const auto patch = static_cast<Eigen::Index>(in_shape.channels) * g.kernel * g.kernel;
  const auto positions = static_cast<Eigen::Index>(oh) * ow;
  ConstMap go(grad_out.data.data(), out_channels, positions);
  ConstMap w(weight.data(), out_channels, patch);

  if (!grad_bias.empty()) {
    for (int c = 0; c < out_channels; ++c) grad_bias[static_cast<std::size_t>(c)] += go.row(c).sum();
  }
  if (is_pointwise(g)) {
    ConstMap x(in.data(), patch, positions);
    MutMap(grad_weight.data(), out_channels, patch).noalias() += go * x.transpose();
    if (!grad_in.empty()) MutMap(grad_in.data(), patch, positions).noalias() += w.transpose() * go;
    return;
  }
  std::vector<double> col(static_cast<std::size_t>(patch * positions));
  im2col(in.data(), in_shape, g, oh, ow, col.data());
  MutMap(grad_weight.data(), out_channels, patch).noalias() += go * ConstMap(col.data(), patch, positions).transpose();
  if (!grad_in.empty()) {
    MutMap(col.data(), patch, positions).noalias() = w.transpose() * go;
    col2im(col.data(), in_shape, g, oh, ow, grad_in.data());
  }
}

void conv_transpose_forward(const FeatureMap& in, std::span<const double> weight, std::span<const double> bias,
                            int out_channels, const ConvGeometry& g, Shape3 out_shape, FeatureMap& out) {
  // The transposed convolution is the adjoint of a convolution from out_shape to in.
  if (conv_output_size(out_shape.height, g) != in.height() || conv_output_size(out_shape.width, g) != in.width()) {
    throw PreconditionError("transposed convolution geometry does not map input onto the requested output");
  }
  const auto patch = static_cast<Eigen::Index>(out_channels) * g.kernel * g.kernel;
  const auto positions = static_cast<Eigen::Index>(in.shape.plane());
  ConstMap w(weight.data(), in.channels(), patch);
  ConstMap x(in.data.data(), in.channels(), positions);
  std::vector<double> col(static_cast<std::size_t>(patch * positions));
  MutMap(col.data(), patch, positions).noalias() = w.transpose() * x;
  out = FeatureMap(out_shape);
  col2im(col.data(), out_shape, g, in.height(), in.width(), out.data.data());
  if (!bias.empty()) {
    const std::size_t plane = out_shape.plane();
    for (int c = 0; c < out_channels; ++c) {
      double* p = out.data.data() + static_cast<std::size_t>(c) * plane;
      for (std::size_t k = 0; k < plane; ++k) p[k] += bias[static_cast<std::size_t>(c)];
    }
  }
}

void conv_transpose_backward(const FeatureMap& in, std::span<const double> weight, const FeatureMap& grad_out,
                             const ConvGeometry& g, std::span<double> grad_weight, std::span<double> grad_bias,
                             std::span<double> grad_in) {
  const int out_channels = grad_out.channels();
  const auto patch = static_cast<Eigen::Index>(out_channels) * g.kernel * g.kernel;
  const auto positions = static_cast<Eigen::Index>(in.shape.plane());
  std::vector<double> col(static_cast<std::size_t>(patch * positions));
  im2col(grad_out.data.data(), grad_out.shape, g, in.height(), in.width(), col.data());
  ConstMap dcol(col.data(), patch, positions);
  ConstMap x(in.data.data(), in.channels(), positions);
  MutMap(grad_weight.data(), in.channels(), patch).noalias() += x * dcol.transpose();
  if (!grad_in.empty()) {
    MutMap(grad_in.data(), in.channels(), positions).noalias() += ConstMap(weight.data(), in.channels(), patch) * dcol;
  }
  if (!grad_bias.empty()) {
    const std::size_t plane = grad_out.shape.plane();
    for (int c = 0; c < out_channels; ++c) {
      const double* p = grad_out.data.data() + static_cast<std::size_t>(c) * plane;
      double s = 0.0;
      for (std::size_t k = 0; k < plane; ++k) s += p[k];
      grad_bias[static_cast<std::size_t>(c)] += s;
    }
  }
}

void relu_inplace(std::span<double> v) {
  for (double& x : v) x = x > 0.0 ? x : 0.0;
}

void relu_backward(std::span<const double> activation, std::span<double> grad) {
  for (std::size_t k = 0; k < grad.size(); ++k) {
    if (!(activation[k] > 0.0)) grad[k] = 0.0;
  }
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

FeatureMap max_pool2(const FeatureMap& in, std::vector<std::uint32_t>& argmax) {
  FeatureMap out(in.channels(), in.height() / 2, in.width() / 2);
  argmax.assign(out.size(), 0);
  std::size_t o = 0;
  for (int c = 0; c < out.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x, ++o) {
        double best = -std::numeric_limits<double>::infinity();
        std::uint32_t best_idx = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) {
            const auto idx = static_cast<std::uint32_t>((static_cast<std::size_t>(c) * in.height() + 2 * y + dy) * in.width() + 2 * x + dx);
            if (in.data[idx] > best) {
              best = in.data[idx];
              best_idx = idx;
            }
          }
        }
        out.data[o] = best;
        argmax[o] = best_idx;
      }
    }
  }
  return out;
}

void max_pool2_backward(const FeatureMap& grad_out, const std::vector<std::uint32_t>& argmax, FeatureMap& grad_in) {
  for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in.data[argmax[o]] += grad_out.data[o];
}

FeatureMap avg_pool2(const FeatureMap& in) {
  FeatureMap out(in.channels(), in.height() / 2, in.width() / 2);
  for (int c = 0; c < out.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        out.at(c, y, x) = 0.25 * (in.at(c, 2 * y, 2 * x) + in.at(c, 2 * y, 2 * x + 1) +
                                  in.at(c, 2 * y + 1, 2 * x) + in.at(c, 2 * y + 1, 2 * x + 1));
      }
    }
  }
  return out;
}

void avg_pool2_backward(const FeatureMap& grad_out, FeatureMap& grad_in) {
  for (int c = 0; c < grad_out.channels(); ++c) {
    for (int y = 0; y < grad_out.height(); ++y) {
      for (int x = 0; x < grad_out.width(); ++x) {
        const double g = 0.25 * grad_out.at(c, y, x);
        grad_in.at(c, 2 * y, 2 * x) += g;
        grad_in.at(c, 2 * y, 2 * x + 1) += g;
        grad_in.at(c, 2 * y + 1, 2 * x) += g;
        grad_in.at(c, 2 * y + 1, 2 * x + 1) += g;
      }
    }
  }
}

std::vector<double> spp_forward(const FeatureMap& in, std::span<const int> grids, std::vector<std::uint32_t>& argmax) {
  const int h = in.height();
  const int w = in.width();
  if (h < 1 || w < 1) throw PreconditionError("SPP input has an empty spatial extent");
  std::size_t cells = 0;
  for (int g : grids) cells += static_cast<std::size_t>(g) * g;
  std::vector<double> out(static_cast<std::size_t>(in.channels()) * cells);
  argmax.assign(out.size(), 0);
  std::size_t o = 0;
  for (int c = 0; c < in.channels(); ++c) {
    for (int g : grids) {
      for (int a = 0; a < g; ++a) {
        const int y0 = a * h / g;
        const int y1 = ((a + 1) * h + g - 1) / g;
        for (int b = 0; b < g; ++b, ++o) {
          const int x0 = b * w / g;
          const int x1 = ((b + 1) * w + g - 1) / g;
          double best = -std::numeric_limits<double>::infinity();
          std::uint32_t best_idx = 0;
          for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
              const auto idx = static_cast<std::uint32_t>((static_cast<std::size_t>(c) * h + y) * w + x);
              if (in.data[idx] > best) {
                best = in.data[idx];
                best_idx = idx;
              }
            }
          }
          out[o] = best;
          argmax[o] = best_idx;
        }
      }
    }
  }
  return out;
}

void spp_backward(std::span<const double> grad_out, const std::vector<std::uint32_t>& argmax, FeatureMap& grad_in) {
  for (std::size_t o = 0; o < grad_out.size(); ++o) grad_in.data[argmax[o]] += grad_out[o];
}

}  // namespace dqa::bfen::ops
