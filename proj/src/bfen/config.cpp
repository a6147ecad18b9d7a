#include "dqa/bfen/config.hpp"

#include <set>

#include "dqa/error.hpp"

namespace dqa::bfen {

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw PreconditionError("invalid model config: " + what);
  };
  require(stem_channels >= 1, "stem_channels must be >= 1");
  for (int b = 0; b < 4; ++b) {
    require(db_layers[b] >= 1, "db_layers must be >= 1");
    require(growth_rates[b] >= 1, "growth_rates must be >= 1");
    require(db_channels[b] >= 1, "db_channels must be >= 1");
  }
  require(bottleneck_factor >= 1, "bottleneck_factor must be >= 1");
  require(backward_channels >= 1, "backward_channels must be >= 1");
  require(!spp_grids.empty(), "spp_grids must not be empty");
  for (int g : spp_grids) require(g >= 1, "spp grid sizes must be >= 1");
  require(fc_dims[0] >= 1 && fc_dims[1] >= 1, "fc_dims must be >= 1");
  require(fc_dims[2] == 1, "the last fc layer must produce a single score");
  require(input_height >= 32 && input_height % 32 == 0, "input_height must be a positive multiple of 32");
  require(input_width >= 32 && input_width % 32 == 0, "input_width must be a positive multiple of 32");
}

int ModelConfig::pooled_cells() const {
  int cells = 0;
  for (int g : spp_grids) cells += g * g;
  return cells;
}

ModelConfig ModelConfig::tiny() {
  ModelConfig c;
  c.stem_channels = 8;
  c.db_layers = {2, 2, 2, 2};
  c.growth_rates = {4, 4, 4, 4};
  c.bottleneck_factor = 2;
  c.db_channels = {8, 8, 8, 8};
  c.backward_channels = 8;
  c.fc_dims = {16, 8, 1};
  c.input_height = 32;
  c.input_width = 32;
  return c;
}

namespace {

const char* to_string(UpsampleInit i) { return i == UpsampleInit::bilinear ? "bilinear" : "he_uniform"; }

}  // namespace

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"stem_channels", c.stem_channels},
                     {"db_layers", c.db_layers},
                     {"growth_rates", c.growth_rates},
                     {"bottleneck_factor", c.bottleneck_factor},
                     {"db_channels", c.db_channels},
                     {"backward_channels", c.backward_channels},
                     {"spp_grids", c.spp_grids},
                     {"fc_dims", c.fc_dims},
                     {"input_height", c.input_height},
                     {"input_width", c.input_width},
                     {"upsample_init", to_string(c.upsample_init)}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  static const std::set<std::string> kKeys = {"stem_channels", "db_layers",   "growth_rates",     "bottleneck_factor",
                                              "db_channels",   "backward_channels", "spp_grids",   "fc_dims",
                                              "input_height",  "input_width", "upsample_init"};
  if (!j.is_object()) throw ParseError("model config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    if (!kKeys.contains(key)) throw ParseError("unknown model config key: " + key);
  }
  try {
    if (j.contains("stem_channels")) j.at("stem_channels").get_to(c.stem_channels);
    if (j.contains("db_layers")) j.at("db_layers").get_to(c.db_layers);
    if (j.contains("growth_rates")) j.at("growth_rates").get_to(c.growth_rates);
    if (j.contains("bottleneck_factor")) j.at("bottleneck_factor").get_to(c.bottleneck_factor);
    if (j.contains("db_channels")) j.at("db_channels").get_to(c.db_channels);
    if (j.contains("backward_channels")) j.at("backward_channels").get_to(c.backward_channels);
    if (j.contains("spp_grids")) j.at("spp_grids").get_to(c.spp_grids);
    if (j.contains("fc_dims")) j.at("fc_dims").get_to(c.fc_dims);
    if (j.contains("input_height")) j.at("input_height").get_to(c.input_height);
    if (j.contains("input_width")) j.at("input_width").get_to(c.input_width);
    if (j.contains("upsample_init")) {
      const auto s = j.at("upsample_init").get<std::string>();
      if (s == "bilinear") c.upsample_init = UpsampleInit::bilinear;
      else if (s == "he_uniform") c.upsample_init = UpsampleInit::he_uniform;
      else throw ParseError("upsample_init must be 'he_uniform' or 'bilinear'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("model config: ") + e.what());
  }
}

}  // namespace dqa::bfen
