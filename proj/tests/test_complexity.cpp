#include <gtest/gtest.h>

#include <sstream>

#include "dqa/complexity.hpp"
#include "dqa/error.hpp"
#include "support.hpp"

using namespace dqa;
using namespace dqa::testing;

namespace {

bfen::ModelConfig toy_b() {
  bfen::ModelConfig c;
  c.stem_channels = 6;
  c.db_layers = {1, 2, 1, 3};
  c.growth_rates = {3, 5, 2, 4};
  c.bottleneck_factor = 3;
  c.db_channels = {10, 12, 7, 9};
  c.backward_channels = 5;
  c.spp_grids = {3, 1};
  c.fc_dims = {7, 4, 1};
  c.input_height = 64;
  c.input_width = 96;
  return c;
}

}  // namespace

TEST(Complexity, PrimitiveFormulas) {
  EXPECT_EQ(conv_flops(3, 2, 4, 5, 6), 2u * 9 * 2 * 4 * 30);
  EXPECT_EQ(conv_transpose_flops(4, 8, 8, 2, 2), 2u * 16 * 64 * 4);
  EXPECT_EQ(linear_flops(160, 16), 5120u);
}

TEST(Complexity, ToyConfigsMatchHandCounts) {
  for (const auto& cfg : {bfen::ModelConfig::tiny(), toy_b()}) {
    const bfen::Model m = bfen::allocate_model(cfg);
    const HandCount hand = hand_count(cfg, cfg.input_height, cfg.input_width);
    EXPECT_EQ(count_params(m), hand.params);
    const FlopReport r = count_flops(m, cfg.input_height, cfg.input_width);
    EXPECT_EQ(r.total(), hand.flops);
    EXPECT_EQ(r.spatial_conv_total(), hand.spatial_conv_flops);
  }
  EXPECT_EQ(count_params(bfen::allocate_model(bfen::ModelConfig::tiny())), 35766u);
}

TEST(Complexity, SpatialConvCostQuadruplesWhenResolutionDoubles) {
  for (const auto& cfg : {bfen::ModelConfig::tiny(), toy_b()}) {
    const bfen::Model m = bfen::allocate_model(cfg);
    const auto base = count_flops(m, cfg.input_height, cfg.input_width);
    const auto doubled = count_flops(m, 2 * cfg.input_height, 2 * cfg.input_width);
    EXPECT_EQ(doubled.spatial_conv_total(), 4 * base.spatial_conv_total());
  }
}

TEST(Complexity, BreakdownCoversEveryLayer) {
  const bfen::Model m = bfen::allocate_model(bfen::ModelConfig::tiny());
  const auto r = count_flops(m, 32, 32);
  std::set<std::string> names;
  for (const auto& l : r.layers) {
    EXPECT_TRUE(names.insert(l.name).second) << l.name;
    EXPECT_GT(l.flops, 0u) << l.name;
  }
  for (const char* n : {"stem.conv", "db4.transition", "up4to1", "gate1", "merge", "fc3", "sigmoid"}) {
    EXPECT_TRUE(names.contains(n)) << n;
  }
  EXPECT_THROW(count_flops(m, 48, 32), PreconditionError);
}

TEST(Complexity, ReportAndThroughput) {
  const bfen::Model m = bfen::init_model(bfen::ModelConfig::tiny(), 1);
  const double ips = benchmark_throughput(m, 32, 32, 3);
  EXPECT_GT(ips, 0.0);
  ComplexityReport rep{32, 32, count_params(m), count_flops(m, 32, 32).total(), ips, hardware_note()};
  std::ostringstream out;
  write_complexity_report(out, rep);
  const std::string text = out.str();
  EXPECT_NE(text.find("params = 35766\n"), std::string::npos);
  EXPECT_NE(text.find("params_M = 0.04\n"), std::string::npos);
  EXPECT_NE(text.find("flops_B = "), std::string::npos);
  EXPECT_NE(text.find("images_per_sec = "), std::string::npos);
  EXPECT_NE(text.find("multiply-accumulate = 2 FLOPs"), std::string::npos);
}
