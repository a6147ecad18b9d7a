#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dqa/bfen/config.hpp"
#include "dqa/bfen/ops.hpp"
#include "dqa/bfen/tensor.hpp"

namespace dqa::bfen {

// One learnable tensor. `init` records where its values came from.
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<double> values;
  std::string init;

  std::size_t size() const { return values.size(); }
};

using Gradients = std::vector<std::vector<double>>;  // aligned with Model::params

struct ConvLayer {
  std::size_t weight = 0;
  std::size_t bias = 0;
  int in_channels = 0;
  int out_channels = 0;
  ops::ConvGeometry geometry;
};

struct DenseLayer {
  ConvLayer bottleneck;  // 1x1
  ConvLayer conv;        // 3x3
};

struct DenseBlock {
  int in_channels = 0;
  int growth = 0;
  std::vector<DenseLayer> layers;
  ConvLayer transition;  // 1x1 to the block's output width
};

// Transposed convolution lifting x_hat[from] onto x_hat[to]'s resolution.
struct UpsampleLayer {
  int from = 0;  // 0-based scale index, from > to
  int to = 0;
  ConvLayer conv;
};

struct LinearLayer {
  std::size_t weight = 0;  // [out][in]
  std::size_t bias = 0;
  int in = 0;
  int out = 0;
};

// Parameter index map derived from a ModelConfig.
struct Layout {
  ConvLayer stem;
  std::array<DenseBlock, 4> blocks;
  std::array<ConvLayer, 4> lateral;
  std::vector<UpsampleLayer> upsample;
  std::array<LinearLayer, 4> gate;  // C x C, shared over pooled positions
  std::size_t merge_weight = 0;     // 4 stack weights
  std::size_t merge_bias = 0;       // 1
  std::array<LinearLayer, 3> head;
};

struct Model {
  ModelConfig config;
  std::uint64_t seed = 0;
  Layout layout;
  std::vector<Param> params;

  std::size_t parameter_count() const;
  std::optional<std::size_t> find(const std::string& name) const;
  Param& param(const std::string& name);
  const Param& param(const std::string& name) const;
  Gradients zero_gradients() const;
};

// Builds parameter shapes and names without initializing values.
Model allocate_model(const ModelConfig& config);

struct InitOptions {
  // Checkpoint whose stem and dense-block tensors replace the random ones.
  std::optional<std::filesystem::path> pretrained;
};

// He-uniform weights (bound sqrt(6 / fan_in)), zero biases. Deterministic in `seed`.
Model init_model(const ModelConfig& config, std::uint64_t seed, const InitOptions& options = {});

using ScaleMaps = std::array<FeatureMap, 4>;

// Intermediate activations of one forward pass, kept for backpropagation.
struct Trace {
  FeatureMap image;
  FeatureMap stem;  // post-ReLU, before max pooling
  std::vector<std::uint32_t> stem_argmax;
  std::array<FeatureMap, 4> block_input;
  std::array<FeatureMap, 4> concat;  // every dense layer output appended to the input
  std::array<std::vector<FeatureMap>, 4> hidden;  // bottleneck activations per layer
  ScaleMaps x;                       // forward-path outputs
  ScaleMaps lateral;                 // f_1x1(x_i)
  ScaleMaps x_hat;                   // backward-path outputs
  std::array<std::vector<double>, 4> y;  // SPP vectors
  std::array<std::vector<std::uint32_t>, 4> spp_argmax;
  std::array<std::vector<double>, 4> gate;  // sigmoid gate values
  std::vector<double> fused_pre;  // before ReLU
  std::vector<double> z;
  std::array<std::vector<double>, 3> fc;  // post-activation outputs of the head layers (last: pre-sigmoid)
  double score = 0.0;
};

ScaleMaps forward_path(const Model& model, const FeatureMap& image, Trace* trace = nullptr);
ScaleMaps backward_path(const Model& model, const ScaleMaps& x, Trace* trace = nullptr);
std::vector<double> spp(const FeatureMap& map, std::span<const int> grids);

struct FusionState {
  std::vector<std::vector<double>> y;  // 4 x D
  std::vector<std::vector<double>> w;  // 4 x D
  std::vector<double> z;               // D
};
FusionState gated_fusion(const Model& model, const std::array<std::vector<double>, 4>& y);

// Full composition; returns Q_p in (0,1).
double predict(const Model& model, const FeatureMap& image, Trace* trace = nullptr);
std::vector<double> predict_batch(const Model& model, std::span<const FeatureMap> images);

// Mean squared error between predictions and targets in [0,1].
double loss(std::span<const double> predictions, std::span<const double> targets);

struct GradientResult {
  double loss = 0.0;
  std::vector<double> predictions;
  Gradients gradients;
};

// Analytic gradient of `loss_scale * loss` with respect to every parameter.
// Samples are accumulated in order, so the result is deterministic.
GradientResult gradients(const Model& model, std::span<const FeatureMap> images, std::span<const double> targets,
                         double loss_scale = 1.0);

// Self-describing JSON container: format tag, version, seed, config echo, named tensors.
void save_checkpoint(const Model& model, const std::filesystem::path& path);
Model load_checkpoint(const std::filesystem::path& path);

}  // namespace dqa::bfen
