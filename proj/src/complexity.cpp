#include "dqa/complexity.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <fstream>
#include <ostream>
#include <random>
#include <thread>

#include "dqa/error.hpp"
#include "dqa/text.hpp"

namespace dqa {

std::uint64_t conv_flops(int kernel, int in_channels, int out_channels, int out_height, int out_width) {
  return 2ULL * static_cast<std::uint64_t>(kernel) * kernel * in_channels * out_channels *
         static_cast<std::uint64_t>(out_height) * out_width;
}

std::uint64_t conv_transpose_flops(int kernel, int in_channels, int out_channels, int in_height, int in_width) {
  return 2ULL * static_cast<std::uint64_t>(kernel) * kernel * in_channels * out_channels *
         static_cast<std::uint64_t>(in_height) * in_width;
}

std::uint64_t linear_flops(int in, int out) { return 2ULL * static_cast<std::uint64_t>(in) * out; }

std::uint64_t FlopReport::total() const {
  std::uint64_t s = 0;
  for (const auto& l : layers) s += l.flops;
  return s;
}

std::uint64_t FlopReport::spatial_conv_total() const {
  std::uint64_t s = 0;
  for (const auto& l : layers) {
    if (l.kind == CostKind::conv || l.kind == CostKind::conv_transpose) s += l.flops;
  }
  return s;
}

std::uint64_t count_params(const bfen::Model& model) { return model.parameter_count(); }

FlopReport count_flops(const bfen::Model& model, int height, int width) {
  if (height < 32 || width < 32 || height % 32 != 0 || width % 32 != 0) {
    throw PreconditionError("count_flops: input size must be a positive multiple of 32");
  }
  const auto& cfg = model.config;
  const auto& L = model.layout;
  FlopReport r;
  r.height = height;
  r.width = width;
  auto add = [&](std::string name, CostKind kind, std::uint64_t flops) { r.layers.push_back({std::move(name), kind, flops}); };
  auto elems = [](std::uint64_t c, int h, int w) { return c * static_cast<std::uint64_t>(h) * static_cast<std::uint64_t>(w); };

  int h = height / 2;
  int w = width / 2;
  add("stem.conv", CostKind::conv, conv_flops(7, 3, cfg.stem_channels, h, w));
  add("stem.relu", CostKind::activation, elems(cfg.stem_channels, h, w));
  h /= 2;
  w /= 2;
  add("stem.maxpool", CostKind::pool, elems(cfg.stem_channels, h, w));

  std::array<std::pair<int, int>, 4> sizes{};
  for (int b = 0; b < 4; ++b) {
    const auto& block = L.blocks[b];
    const std::string prefix = "db" + std::to_string(b + 1);
    sizes[b] = {h, w};
    for (std::size_t l = 0; l < block.layers.size(); ++l) {
      const auto& layer = block.layers[l];
      const std::string name = prefix + ".layer" + std::to_string(l + 1);
      add(name + ".bottleneck", CostKind::conv, conv_flops(1, layer.bottleneck.in_channels, layer.bottleneck.out_channels, h, w));
      add(name + ".bottleneck.relu", CostKind::activation, elems(layer.bottleneck.out_channels, h, w));
      add(name + ".conv", CostKind::conv, conv_flops(3, layer.conv.in_channels, layer.conv.out_channels, h, w));
      add(name + ".conv.relu", CostKind::activation, elems(layer.conv.out_channels, h, w));
    }
    add(prefix + ".transition", CostKind::conv,
        conv_flops(1, block.transition.in_channels, block.transition.out_channels, h, w));
    add(prefix + ".transition.relu", CostKind::activation, elems(block.transition.out_channels, h, w));
    if (b < 3) {
      h /= 2;
      w /= 2;
      add(prefix + ".avgpool", CostKind::pool, elems(block.transition.out_channels, h, w));
    }
  }

  const int c = cfg.backward_channels;
  for (int i = 0; i < 4; ++i) {
    const auto [hi, wi] = sizes[i];
    add("lateral" + std::to_string(i + 1), CostKind::conv, conv_flops(1, L.lateral[i].in_channels, c, hi, wi));
    add("lateral" + std::to_string(i + 1) + ".relu", CostKind::activation, elems(c, hi, wi));
  }
  for (const auto& up : L.upsample) {
    const auto [hj, wj] = sizes[up.from];
    const auto [hi, wi] = sizes[up.to];
    const std::string name = "up" + std::to_string(up.from + 1) + "to" + std::to_string(up.to + 1);
    add(name, CostKind::conv_transpose, conv_transpose_flops(up.conv.geometry.kernel, c, c, hj, wj));
    add(name + ".sum", CostKind::elementwise, elems(c, hi, wi));
  }

  const int cells = cfg.pooled_cells();
  const auto d = static_cast<std::uint64_t>(cfg.fused_dim());
  for (int i = 0; i < 4; ++i) {
    const std::string s = std::to_string(i + 1);
    add("spp" + s, CostKind::pool, d);
    add("gate" + s, CostKind::pooled_conv, 2ULL * c * c * cells);
    add("gate" + s + ".sigmoid", CostKind::activation, d);
    add("gate" + s + ".product", CostKind::elementwise, d);
  }
  add("merge", CostKind::pooled_conv, 2ULL * 4 * d);
  add("merge.relu", CostKind::activation, d);
  for (int k = 0; k < 3; ++k) {
    const auto& fc = L.head[k];
    add("fc" + std::to_string(k + 1), CostKind::linear, linear_flops(fc.in, fc.out));
    add(k < 2 ? "fc" + std::to_string(k + 1) + ".relu" : "sigmoid", CostKind::activation, static_cast<std::uint64_t>(fc.out));
  }
  return r;
}

double benchmark_throughput(const bfen::Model& model, int height, int width, int n_images, int warmup) {
  if (n_images < 1) throw PreconditionError("benchmark needs at least one image");
  bfen::FeatureMap image(3, height, width);
  std::mt19937_64 rng(0);
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (double& v : image.data) v = dist(rng);
  volatile double sink = 0.0;
  for (int k = 0; k < warmup; ++k) sink = sink + bfen::predict(model, image);
  const auto start = std::chrono::steady_clock::now();
  for (int k = 0; k < n_images; ++k) sink = sink + bfen::predict(model, image);
  const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
  return static_cast<double>(n_images) / std::max(elapsed.count(), 1e-9);
}

std::string hardware_note() {
  std::string cpu = "unknown cpu";
  std::ifstream info("/proc/cpuinfo");
  std::string line;
  while (std::getline(info, line)) {
    if (line.starts_with("model name")) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) cpu = std::string(text::trim(line.substr(colon + 1)));
      break;
    }
  }
  return cpu + ", " + std::to_string(std::thread::hardware_concurrency()) +
         " hardware threads, single-threaded double-precision CPU inference";
}

void write_complexity_report(std::ostream& out, const ComplexityReport& r) {
  out << "# flops convention: multiply-accumulate = 2 FLOPs; pooling/activation/element-wise = 1 per output\n"
      << "input = " << r.height << "x" << r.width << '\n'
      << "params = " << r.param_count << '\n'
      << "params_M = " << text::format_fixed(static_cast<double>(r.param_count) / 1e6, 2) << '\n'
      << "flops = " << r.flops << '\n'
      << "flops_B = " << text::format_fixed(static_cast<double>(r.flops) / 1e9, 2) << '\n';
  if (r.images_per_sec > 0.0) out << "images_per_sec = " << text::format_fixed(r.images_per_sec, 2) << '\n';
  if (!r.environment.empty()) out << "environment = " << r.environment << '\n';
}

}  // namespace dqa
