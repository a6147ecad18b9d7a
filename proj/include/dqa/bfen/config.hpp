#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace dqa::bfen {

enum class UpsampleInit { he_uniform, bilinear };

// Architecture hyperparameters. Dense-block widths are free parameters; the
// defaults follow the DenseNet-161 layout (growth 48, 6/12/36/24 layers).
struct ModelConfig {
  int stem_channels = 96;
  std::array<int, 4> db_layers{6, 12, 36, 24};
  std::array<int, 4> growth_rates{48, 48, 48, 48};
  int bottleneck_factor = 4;  // 1x1 bottleneck width = factor * growth
  std::array<int, 4> db_channels{192, 384, 1056, 2208};
  int backward_channels = 256;
  std::vector<int> spp_grids{4, 2};
  std::array<int, 3> fc_dims{1024, 256, 1};
  int input_height = 320;
  int input_width = 320;
  UpsampleInit upsample_init = UpsampleInit::he_uniform;

  // Throws PreconditionError describing the first violated invariant.
  void validate() const;

  // Length of each pooled vector y_i: backward_channels * sum(grid^2).
  int pooled_cells() const;
  int fused_dim() const { return backward_channels * pooled_cells(); }

  // Two-layer blocks, C = 8, 32x32 input: the desk-scale configuration used for
  // gradient checks and smoke training.
  static ModelConfig tiny();

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
// Missing keys keep their defaults; unknown keys are rejected.
void from_json(const nlohmann::json& j, ModelConfig& c);

}  // namespace dqa::bfen
