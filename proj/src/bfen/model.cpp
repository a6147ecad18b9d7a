#include "dqa/bfen/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "dqa/error.hpp"

namespace dqa::bfen {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMat = Eigen::Map<const RowMatrix>;
using MutMat = Eigen::Map<RowMatrix>;
using ConstVec = Eigen::Map<const Eigen::VectorXd>;
using MutVec = Eigen::Map<Eigen::VectorXd>;

constexpr int kScales = 4;
constexpr std::string_view kCheckpointFormat = "dqa-bfen-checkpoint";
constexpr int kCheckpointVersion = 1;

std::size_t add_param(Model& m, std::string name, std::vector<int> shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  m.params.push_back({std::move(name), std::move(shape), std::vector<double>(n, 0.0), ""});
  return m.params.size() - 1;
}

ConvLayer add_conv(Model& m, const std::string& name, int in, int out, ops::ConvGeometry g) {
  ConvLayer l;
  l.in_channels = in;
  l.out_channels = out;
  l.geometry = g;
  l.weight = add_param(m, name + ".weight", {out, in, g.kernel, g.kernel});
  l.bias = add_param(m, name + ".bias", {out});
  return l;
}

ConvLayer add_conv_transpose(Model& m, const std::string& name, int in, int out, ops::ConvGeometry g) {
  ConvLayer l;
  l.in_channels = in;
  l.out_channels = out;
  l.geometry = g;
  l.weight = add_param(m, name + ".weight", {in, out, g.kernel, g.kernel});
  l.bias = add_param(m, name + ".bias", {out});
  return l;
}

LinearLayer add_linear(Model& m, const std::string& name, int in, int out) {
  LinearLayer l;
  l.in = in;
  l.out = out;
  l.weight = add_param(m, name + ".weight", {out, in});
  l.bias = add_param(m, name + ".bias", {out});
  return l;
}

std::span<const double> values(const Model& m, std::size_t idx) { return m.params[idx].values; }

std::size_t upsample_index(const Model& m, int from, int to) {
  for (std::size_t k = 0; k < m.layout.upsample.size(); ++k) {
    if (m.layout.upsample[k].from == from && m.layout.upsample[k].to == to) return k;
  }
  throw Error("no upsampling layer for the requested scales");
}

bool is_dense_block_param(const std::string& name) { return name.starts_with("stem.") || name.starts_with("db"); }

// Fan-in of a parameter tensor as used by the He-uniform bound.
int fan_in(const Param& p) {
  if (p.shape.size() == 4) {
    const int in = p.name.starts_with("up") ? p.shape[0] : p.shape[1];  // transposed layout is [in][out][k][k]
    return in * p.shape[2] * p.shape[3];
  }
  if (p.shape.size() == 2) return p.shape[1];
  return p.shape[0];  // merge weights: the four stacked scales
}

void bilinear_fill(Param& p) {
  const int in = p.shape[0];
  const int out = p.shape[1];
  const int k = p.shape[2];
  const int factor = (k + 1) / 2;
  const double center = factor - 0.5;
  std::fill(p.values.begin(), p.values.end(), 0.0);
  for (int c = 0; c < std::min(in, out); ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const double v = (1.0 - std::abs(ky - center) / factor) * (1.0 - std::abs(kx - center) / factor);
        p.values[((static_cast<std::size_t>(c) * out + c) * k + ky) * k + kx] = v;
      }
    }
  }
}

// ---------------------------------------------------------------------------
// forward helpers

FeatureMap conv_relu(const Model& m, const ConvLayer& l, std::span<const double> in, Shape3 s) {
  FeatureMap out;
  ops::conv2d_forward(in, s, values(m, l.weight), values(m, l.bias), l.out_channels, l.geometry, out);
  ops::relu_inplace(out.span());
  return out;
}

void run_forward_path(const Model& m, const FeatureMap& image, Trace& t) {
  if (image.channels() != 3) throw PreconditionError("forward_path expects a 3-channel image");
  if (image.height() < 32 || image.width() < 32 || image.height() % 32 != 0 || image.width() % 32 != 0) {
    throw PreconditionError("input size " + std::to_string(image.height()) + "x" + std::to_string(image.width()) +
                            " is not a positive multiple of 32");
  }
  t.image = image;
  t.stem = conv_relu(m, m.layout.stem, image.span(), image.shape);
  FeatureMap input = ops::max_pool2(t.stem, t.stem_argmax);

  for (int b = 0; b < kScales; ++b) {
    const DenseBlock& block = m.layout.blocks[b];
    const Shape3 in_shape = input.shape;
    const int total = block.in_channels + static_cast<int>(block.layers.size()) * block.growth;
    FeatureMap concat(total, in_shape.height, in_shape.width);
    std::copy(input.data.begin(), input.data.end(), concat.data.begin());
    t.hidden[b].clear();
    for (std::size_t l = 0; l < block.layers.size(); ++l) {
      const int prefix = block.in_channels + static_cast<int>(l) * block.growth;
      const Shape3 prefix_shape{prefix, in_shape.height, in_shape.width};
      FeatureMap hidden = conv_relu(m, block.layers[l].bottleneck, concat.span().first(prefix_shape.size()), prefix_shape);
      FeatureMap out = conv_relu(m, block.layers[l].conv, hidden.span(), hidden.shape);
      std::copy(out.data.begin(), out.data.end(), concat.data.begin() + static_cast<std::ptrdiff_t>(prefix_shape.size()));
      t.hidden[b].push_back(std::move(hidden));
    }
    t.x[b] = conv_relu(m, block.transition, concat.span(), concat.shape);
    t.block_input[b] = std::move(input);
    t.concat[b] = std::move(concat);
    if (b + 1 < kScales) input = ops::avg_pool2(t.x[b]);
  }
}

void run_backward_path(const Model& m, const ScaleMaps& x, Trace& t) {
  const int c = m.config.backward_channels;
  for (int i = kScales - 1; i >= 0; --i) {
    if (x[i].channels() != m.layout.lateral[i].in_channels) {
      throw PreconditionError("backward_path: x" + std::to_string(i + 1) + " has the wrong channel count");
    }
    t.lateral[i] = conv_relu(m, m.layout.lateral[i], x[i].span(), x[i].shape);
    t.x_hat[i] = t.lateral[i];
    for (int j = i + 1; j < kScales; ++j) {
      const UpsampleLayer& up = m.layout.upsample[upsample_index(m, j, i)];
      FeatureMap lifted;
      ops::conv_transpose_forward(t.x_hat[j], values(m, up.conv.weight), values(m, up.conv.bias), c,
                                  up.conv.geometry, t.x_hat[i].shape, lifted);
      if (lifted.shape != t.x_hat[i].shape) throw Error("backward_path: upsampled map misaligned");
      for (std::size_t k = 0; k < lifted.size(); ++k) t.x_hat[i].data[k] += lifted.data[k];
    }
  }
}

void run_fusion(const Model& m, Trace& t) {
  const int c = m.config.backward_channels;
  const int cells = m.config.pooled_cells();
  const auto d = static_cast<std::size_t>(c) * cells;
  for (int i = 0; i < kScales; ++i) {
    if (t.y[i].size() != d) throw PreconditionError("gated_fusion: pooled vector length mismatch");
  }
  const auto& mw = m.params[m.layout.merge_weight].values;
  const double mb = m.params[m.layout.merge_bias].values[0];
  t.fused_pre.assign(d, mb);
  for (int i = 0; i < kScales; ++i) {
    const LinearLayer& g = m.layout.gate[i];
    RowMatrix a = ConstMat(values(m, g.weight).data(), c, c) * ConstMat(t.y[i].data(), c, cells);
    const auto& bias = m.params[g.bias].values;
    t.gate[i].resize(d);
    for (int r = 0; r < c; ++r) {
      for (int p = 0; p < cells; ++p) {
        const std::size_t k = static_cast<std::size_t>(r) * cells + p;
        t.gate[i][k] = ops::sigmoid(a(r, p) + bias[r]);
        t.fused_pre[k] += mw[i] * t.gate[i][k] * t.y[i][k];
      }
    }
  }
  t.z = t.fused_pre;
  ops::relu_inplace(t.z);
}

void run_head(const Model& m, Trace& t) {
  const std::vector<double>* in = &t.z;
  for (int k = 0; k < 3; ++k) {
    const LinearLayer& l = m.layout.head[k];
    t.fc[k].resize(static_cast<std::size_t>(l.out));
    MutVec out(t.fc[k].data(), l.out);
    out.noalias() = ConstMat(values(m, l.weight).data(), l.out, l.in) * ConstVec(in->data(), l.in);
    out += ConstVec(values(m, l.bias).data(), l.out);
    if (k < 2) ops::relu_inplace(t.fc[k]);
    in = &t.fc[k];
  }
  t.score = ops::sigmoid(t.fc[2][0]);
}

void run_all(const Model& m, const FeatureMap& image, Trace& t) {
  run_forward_path(m, image, t);
  run_backward_path(m, t.x, t);
  for (int i = 0; i < kScales; ++i) t.y[i] = ops::spp_forward(t.x_hat[i], m.config.spp_grids, t.spp_argmax[i]);
  run_fusion(m, t);
  run_head(m, t);
}

// ---------------------------------------------------------------------------
// backward helpers

// Backpropagates through conv + ReLU given the post-ReLU output; accumulates the input gradient.
void conv_relu_backward(const Model& m, const ConvLayer& l, std::span<const double> in, Shape3 in_shape,
                        const FeatureMap& activation, FeatureMap grad_out, Gradients& grads, std::span<double> grad_in) {
  ops::relu_backward(activation.span(), grad_out.span());
  ops::conv2d_backward(in, in_shape, values(m, l.weight), grad_out, l.geometry, grads[l.weight], grads[l.bias], grad_in);
}

void backprop(const Model& m, const Trace& t, double grad_score, Gradients& grads) {
  const int c = m.config.backward_channels;
  const int cells = m.config.pooled_cells();
  const auto d = static_cast<std::size_t>(c) * cells;

  // Head.
  std::vector<double> grad{grad_score * t.score * (1.0 - t.score)};
  for (int k = 2; k >= 0; --k) {
    const LinearLayer& l = m.layout.head[k];
    const std::vector<double>& in = k > 0 ? t.fc[k - 1] : t.z;
    if (k < 2) ops::relu_backward(t.fc[k], grad);
    ConstVec g(grad.data(), l.out);
    MutMat(grads[l.weight].data(), l.out, l.in).noalias() += g * ConstVec(in.data(), l.in).transpose();
    MutVec(grads[l.bias].data(), l.out) += g;
    std::vector<double> grad_in(static_cast<std::size_t>(l.in));
    MutVec(grad_in.data(), l.in).noalias() = ConstMat(values(m, l.weight).data(), l.out, l.in).transpose() * g;
    grad = std::move(grad_in);
  }

  // Gated fusion.
  ops::relu_backward(t.z, grad);
  const auto& mw = m.params[m.layout.merge_weight].values;
  grads[m.layout.merge_bias][0] += std::accumulate(grad.begin(), grad.end(), 0.0);
  std::array<std::vector<double>, 4> grad_y;
  for (int i = 0; i < kScales; ++i) {
    const LinearLayer& g = m.layout.gate[i];
    grad_y[i].assign(d, 0.0);
    RowMatrix grad_a(c, cells);
    double grad_mw = 0.0;
    for (int r = 0; r < c; ++r) {
      for (int p = 0; p < cells; ++p) {
        const std::size_t k = static_cast<std::size_t>(r) * cells + p;
        const double w = t.gate[i][k];
        const double y = t.y[i][k];
        grad_mw += grad[k] * w * y;
        grad_y[i][k] = grad[k] * mw[i] * w;
        grad_a(r, p) = grad[k] * mw[i] * y * w * (1.0 - w);
      }
    }
    grads[m.layout.merge_weight][i] += grad_mw;
    ConstMat y(t.y[i].data(), c, cells);
    MutMat(grads[g.weight].data(), c, c).noalias() += grad_a * y.transpose();
    MutVec(grads[g.bias].data(), c) += grad_a.rowwise().sum();
    MutMat(grad_y[i].data(), c, cells).noalias() += ConstMat(values(m, g.weight).data(), c, c).transpose() * grad_a;
  }

  // SPP and backward path. x_hat[i] feeds only shallower scales, so gradients
  // are complete once every shallower scale has been processed.
  ScaleMaps grad_x_hat;
  for (int i = 0; i < kScales; ++i) {
    grad_x_hat[i] = FeatureMap(t.x_hat[i].shape);
    ops::spp_backward(grad_y[i], t.spp_argmax[i], grad_x_hat[i]);
  }
  ScaleMaps grad_x;
  for (int i = 0; i < kScales; ++i) {
    for (int j = i + 1; j < kScales; ++j) {
      const UpsampleLayer& up = m.layout.upsample[upsample_index(m, j, i)];
      ops::conv_transpose_backward(t.x_hat[j], values(m, up.conv.weight), grad_x_hat[i], up.conv.geometry,
                                   grads[up.conv.weight], grads[up.conv.bias], grad_x_hat[j].span());
    }
    grad_x[i] = FeatureMap(t.x[i].shape);
    conv_relu_backward(m, m.layout.lateral[i], t.x[i].span(), t.x[i].shape, t.lateral[i], grad_x_hat[i], grads,
                       grad_x[i].span());
  }

  // Forward path, deepest block first.
  FeatureMap grad_input;
  for (int b = kScales - 1; b >= 0; --b) {
    const DenseBlock& block = m.layout.blocks[b];
    if (b + 1 < kScales) ops::avg_pool2_backward(grad_input, grad_x[b]);
    const FeatureMap& concat = t.concat[b];
    FeatureMap grad_concat(concat.shape);
    conv_relu_backward(m, block.transition, concat.span(), concat.shape, t.x[b], grad_x[b], grads, grad_concat.span());
    const Shape3 s = concat.shape;
    for (int l = static_cast<int>(block.layers.size()) - 1; l >= 0; --l) {
      const int prefix = block.in_channels + l * block.growth;
      const Shape3 prefix_shape{prefix, s.height, s.width};
      const Shape3 out_shape{block.growth, s.height, s.width};
      const auto offset = static_cast<std::ptrdiff_t>(prefix_shape.size());
      FeatureMap out(out_shape);
      FeatureMap grad_out(out_shape);
      std::copy_n(concat.data.begin() + offset, out_shape.size(), out.data.begin());
      std::copy_n(grad_concat.data.begin() + offset, out_shape.size(), grad_out.data.begin());
      const FeatureMap& hidden = t.hidden[b][static_cast<std::size_t>(l)];
      FeatureMap grad_hidden(hidden.shape);
      conv_relu_backward(m, block.layers[l].conv, hidden.span(), hidden.shape, out, std::move(grad_out), grads,
                         grad_hidden.span());
      conv_relu_backward(m, block.layers[l].bottleneck, concat.span().first(prefix_shape.size()), prefix_shape, hidden,
                         std::move(grad_hidden), grads, grad_concat.span().first(prefix_shape.size()));
    }
    grad_input = FeatureMap(t.block_input[b].shape);
    std::copy_n(grad_concat.data.begin(), grad_input.size(), grad_input.data.begin());
  }

  // Stem.
  FeatureMap grad_stem(t.stem.shape);
  ops::max_pool2_backward(grad_input, t.stem_argmax, grad_stem);
  ops::relu_backward(t.stem.span(), grad_stem.span());
  ops::conv2d_backward(t.image.span(), t.image.shape, values(m, m.layout.stem.weight), grad_stem,
                       m.layout.stem.geometry, grads[m.layout.stem.weight], grads[m.layout.stem.bias], {});
}

}  // namespace

// ---------------------------------------------------------------------------

std::size_t Model::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params) n += p.size();
  return n;
}

std::optional<std::size_t> Model::find(const std::string& name) const {
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].name == name) return k;
  }
  return std::nullopt;
}

Param& Model::param(const std::string& name) {
  const auto k = find(name);
  if (!k) throw NotFoundError("no parameter named " + name);
  return params[*k];
}

const Param& Model::param(const std::string& name) const { return const_cast<Model*>(this)->param(name); }

Gradients Model::zero_gradients() const {
  Gradients g;
  g.reserve(params.size());
  for (const auto& p : params) g.emplace_back(p.size(), 0.0);
  return g;
}

Model allocate_model(const ModelConfig& config) {
  config.validate();
  Model m;
  m.config = config;
  Layout& L = m.layout;
  L.stem = add_conv(m, "stem", 3, config.stem_channels, {7, 2, 3});
  int in = config.stem_channels;
  for (int b = 0; b < kScales; ++b) {
    DenseBlock& block = L.blocks[b];
    block.in_channels = in;
    block.growth = config.growth_rates[b];
    const int width = config.bottleneck_factor * block.growth;
    const std::string prefix = "db" + std::to_string(b + 1);
    for (int l = 0; l < config.db_layers[b]; ++l) {
      const std::string name = prefix + ".layer" + std::to_string(l + 1);
      DenseLayer layer;
      layer.bottleneck = add_conv(m, name + ".bottleneck", in + l * block.growth, width, {1, 1, 0});
      layer.conv = add_conv(m, name + ".conv", width, block.growth, {3, 1, 1});
      block.layers.push_back(layer);
    }
    block.transition = add_conv(m, prefix + ".transition", in + config.db_layers[b] * block.growth,
                                config.db_channels[b], {1, 1, 0});
    in = config.db_channels[b];
  }
  const int c = config.backward_channels;
  for (int i = 0; i < kScales; ++i) {
    L.lateral[i] = add_conv(m, "lateral" + std::to_string(i + 1), config.db_channels[i], c, {1, 1, 0});
  }
  for (int to = 0; to < kScales; ++to) {
    for (int from = to + 1; from < kScales; ++from) {
      const int factor = 1 << (from - to);
      UpsampleLayer up;
      up.from = from;
      up.to = to;
      up.conv = add_conv_transpose(m, "up" + std::to_string(from + 1) + "to" + std::to_string(to + 1), c, c,
                                   {2 * factor, factor, factor / 2});
      L.upsample.push_back(up);
    }
  }
  for (int i = 0; i < kScales; ++i) L.gate[i] = add_linear(m, "gate" + std::to_string(i + 1), c, c);
  L.merge_weight = add_param(m, "merge.weight", {kScales});
  L.merge_bias = add_param(m, "merge.bias", {1});
  int width = config.fused_dim();
  for (int k = 0; k < 3; ++k) {
    L.head[k] = add_linear(m, "fc" + std::to_string(k + 1), width, config.fc_dims[k]);
    width = config.fc_dims[k];
  }
  return m;
}

Model init_model(const ModelConfig& config, std::uint64_t seed, const InitOptions& options) {
  Model m = allocate_model(config);
  m.seed = seed;
  std::mt19937_64 rng(seed);
  for (auto& p : m.params) {
    if (p.name.ends_with(".bias")) {
      p.init = "zero";
      continue;
    }
    if (p.name.starts_with("up") && config.upsample_init == UpsampleInit::bilinear) {
      bilinear_fill(p);
      p.init = "bilinear";
      continue;
    }
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in(p)));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& v : p.values) v = dist(rng);
    p.init = "he_uniform";
  }
  if (options.pretrained) {
    const Model source = load_checkpoint(*options.pretrained);
    for (auto& p : m.params) {
      if (!is_dense_block_param(p.name)) continue;
      const auto k = source.find(p.name);
      if (!k) throw IntegrityError("pretrained file lacks parameter " + p.name);
      if (source.params[*k].shape != p.shape) throw IntegrityError("pretrained shape mismatch for " + p.name);
      p.values = source.params[*k].values;
      p.init = "pretrained";
    }
  }
  return m;
}

ScaleMaps forward_path(const Model& model, const FeatureMap& image, Trace* trace) {
  Trace local;
  Trace& t = trace ? *trace : local;
  run_forward_path(model, image, t);
  return t.x;
}

ScaleMaps backward_path(const Model& model, const ScaleMaps& x, Trace* trace) {
  Trace local;
  Trace& t = trace ? *trace : local;
  run_backward_path(model, x, t);
  return t.x_hat;
}

std::vector<double> spp(const FeatureMap& map, std::span<const int> grids) {
  std::vector<std::uint32_t> argmax;
  return ops::spp_forward(map, grids, argmax);
}

FusionState gated_fusion(const Model& model, const std::array<std::vector<double>, 4>& y) {
  Trace t;
  t.y = y;
  run_fusion(model, t);
  FusionState s;
  s.y.assign(y.begin(), y.end());
  s.w.assign(t.gate.begin(), t.gate.end());
  s.z = std::move(t.z);
  return s;
}

double predict(const Model& model, const FeatureMap& image, Trace* trace) {
  Trace local;
  Trace& t = trace ? *trace : local;
  run_all(model, image, t);
  return t.score;
}

std::vector<double> predict_batch(const Model& model, std::span<const FeatureMap> images) {
  std::vector<double> out;
  out.reserve(images.size());
  for (const auto& img : images) out.push_back(predict(model, img));
  return out;
}

double loss(std::span<const double> predictions, std::span<const double> targets) {
  if (predictions.size() != targets.size()) throw PreconditionError("loss: length mismatch");
  if (predictions.empty()) throw PreconditionError("loss: empty batch");
  double s = 0.0;
  for (std::size_t k = 0; k < predictions.size(); ++k) {
    const double d = predictions[k] - targets[k];
    s += d * d;
  }
  return s / static_cast<double>(predictions.size());
}

GradientResult gradients(const Model& model, std::span<const FeatureMap> images, std::span<const double> targets,
                         double loss_scale) {
  if (images.size() != targets.size()) throw PreconditionError("gradients: images and targets differ in count");
  if (images.empty()) throw PreconditionError("gradients: empty batch");
  GradientResult r;
  r.gradients = model.zero_gradients();
  const double n = static_cast<double>(images.size());
  Trace t;
  for (std::size_t k = 0; k < images.size(); ++k) {
    run_all(model, images[k], t);
    r.predictions.push_back(t.score);
    backprop(model, t, loss_scale * 2.0 * (t.score - targets[k]) / n, r.gradients);
  }
  r.loss = loss(r.predictions, targets);
  for (std::size_t p = 0; p < r.gradients.size(); ++p) {
    for (double g : r.gradients[p]) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in " + model.params[p].name);
    }
  }
  return r;
}

void save_checkpoint(const Model& model, const std::filesystem::path& path) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["seed"] = model.seed;
  j["config"] = model.config;
  auto& params = j["parameters"] = nlohmann::json::array();
  for (const auto& p : model.params) {
    params.push_back({{"name", p.name}, {"shape", p.shape}, {"init", p.init}, {"values", p.values}});
  }
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint: " + path.string());
  out << j.dump() << '\n';
}

Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open checkpoint: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
    throw ParseError("not a B-FEN checkpoint: " + path.string());
  }
  if (!j.contains("version") || j["version"] != kCheckpointVersion) {
    throw ParseError("unsupported checkpoint version in " + path.string());
  }
  Model m;
  try {
    m = allocate_model(j.at("config").get<ModelConfig>());
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& params = j.at("parameters");
    if (params.size() != m.params.size()) throw IntegrityError("checkpoint parameter count does not match its config");
    for (std::size_t k = 0; k < params.size(); ++k) {
      Param& p = m.params[k];
      const auto& src = params[k];
      if (src.at("name").get<std::string>() != p.name) throw IntegrityError("checkpoint parameter order mismatch at " + p.name);
      if (src.at("shape").get<std::vector<int>>() != p.shape) throw IntegrityError("checkpoint shape mismatch for " + p.name);
      p.values = src.at("values").get<std::vector<double>>();
      if (p.values.size() != static_cast<std::size_t>(std::accumulate(p.shape.begin(), p.shape.end(), 1, std::multiplies<>()))) {
        throw IntegrityError("checkpoint value count mismatch for " + p.name);
      }
      p.init = src.value("init", "checkpoint");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("malformed checkpoint " + path.string() + ": " + e.what());
  }
  return m;
}

}  // namespace dqa::bfen
