#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bseg/errors.hpp"
#include "bseg/flops.hpp"
#include "bseg/harness.hpp"

using namespace bseg;

namespace {

const std::string kFig2 = std::string(BSEG_SOURCE_DIR) + "/configs/paper_fig2.json";

ComponentConfig config_named(const std::string& name) {
  for (const auto& c : load_flops_config(kFig2).configs)
    if (c.name == name) return c;
  throw ConfigError("missing " + name);
}

bool within(double got, double want, double rel) { return std::fabs(got - want) <= rel * want; }

}  // namespace

TEST_SUITE("flops") {

TEST_CASE("primitive examples") {
  CHECK(flops::linear(1, 1, 1) == 2.0);
  const double d = 16;
  CHECK(flops::attention(1, 1, d, 2) == 4 * flops::linear(1, d, d) + 4 * d + 3 * 2);
  CHECK(flops::ffn(3, 4, 8) == flops::linear(3, 4, 8) + flops::linear(3, 8, 4));
  CHECK(flops::bilinear_resize(10, 3) == 240.0);
}

TEST_CASE("token counts enter linearly or quadratically") {
  CHECK(flops::linear(20, 7, 9) == 2 * flops::linear(10, 7, 9));
  CHECK(flops::ffn(20, 7, 9) == 2 * flops::ffn(10, 7, 9));
  CHECK(flops::deform_attention(20, 40, 16, 2, 3, 4) == 2 * flops::deform_attention(10, 20, 16, 2, 3, 4));
  CHECK(flops::deform_sampling(20, 2, 3, 4, 8) == 2 * flops::deform_sampling(10, 2, 3, 4, 8));
  // Self-attention: the score and softmax terms are quadratic, projections linear.
  const double n = 50, d = 32, h = 4;
  const double quad = flops::attention(n, n, d, h) - 4 * flops::linear(n, d, d);
  const double quad2 = flops::attention(2 * n, 2 * n, d, h) - 4 * flops::linear(2 * n, d, d);
  CHECK(quad2 == 4 * quad);
}

TEST_CASE("bottleneck tokens scale with image area") {
  ComponentConfig c = config_named("mobius");
  const double full = c.bottleneck_tokens();
  CHECK(full == 2500);
  c.image_height = c.image_width = 400;
  CHECK(c.bottleneck_tokens() * 4 == full);
  CHECK(flops::linear(c.bottleneck_tokens(), 256, 256) * 4 == flops::linear(full, 256, 256));
  c.bottleneck_stride = 8;
  CHECK(c.bottleneck_tokens() == 2500);
}

TEST_CASE("component costs at 800x800") {
  auto base = component_flops(config_named("glee_maskdino"));
  auto ours = component_flops(config_named("mobius"));
  CHECK(within(base.row("pixel_decoder").gflops, 138.0, 0.2));
  CHECK(within(base.row("modality_fusion").gflops, 28.2, 0.2));
  CHECK(within(base.row("decoder").gflops, 20.1, 0.2));
  CHECK(within(ours.row("pixel_decoder").gflops, 61.4, 0.2));
  CHECK(within(ours.row("modality_fusion").gflops, 5.6, 0.2));
  CHECK(within(ours.row("decoder").gflops, 10.0, 0.2));
  CHECK(base.row("vision_encoder").gflops == 52.4);
}

TEST_CASE("bottleneck reductions against the multi-scale baseline") {
  auto cfg = load_flops_config(kFig2);
  auto reports = compare_report(cfg.configs, cfg.baseline);
  const FlopsReport* ours = nullptr;
  for (const auto& r : reports)
    if (r.config == "mobius") ours = &r;
  REQUIRE(ours);
  CHECK(std::fabs(ours->row("pixel_decoder").pct_reduction_vs_baseline + 55.5) <= 8.0);
  CHECK(std::fabs(ours->row("modality_fusion").pct_reduction_vs_baseline + 79.6) <= 8.0);
  CHECK(std::fabs(ours->row("decoder").pct_reduction_vs_baseline + 50.0) <= 8.0);
  CHECK(std::fabs(ours->row("total").pct_reduction_vs_baseline + 45.6) <= 8.0);
}

TEST_CASE("totals are the sum of parts and baseline compares to zero") {
  auto cfg = load_flops_config(kFig2);
  for (const auto& r : compare_report(cfg.configs, cfg.baseline)) {
    double sum = 0.0;
    for (const auto& row : r.rows)
      if (row.component != "total") sum += row.gflops;
    CHECK(r.row("total").gflops == sum);
    for (const auto& row : r.rows) CHECK(std::fabs(row.pct_of_backbone - 100.0 * row.gflops / 52.4) < 1e-9);
  }
  for (const auto& r : compare_report({config_named("mobius")}, "mobius"))
    for (const auto& row : r.rows) CHECK(row.pct_reduction_vs_baseline == 0.0);
}

TEST_CASE("single versus multi-scale decoder") {
  ComponentConfig single = config_named("mobius");
  ComponentConfig multi = single;
  multi.decoder = DecoderKind::multi_scale;
  const std::vector<std::size_t> counts(9, 300);
  CHECK(decoder_sampling_flops(multi, counts) == 4.0 * decoder_sampling_flops(single, counts));
  const double ratio = decoder_flops(single) / decoder_flops(multi);
  CHECK(within(ratio, 0.5, 0.15));
  CHECK(decoder_flops(single) == decoder_flops(single, counts));
}

TEST_CASE("decoder cost tracks the active counts") {
  ComponentConfig c = config_named("mobius");
  CHECK(decoder_flops(c, std::vector<std::size_t>(9, 0)) == 0.0);
  CHECK(decoder_layer_flops(c, 0) == 0.0);
  std::vector<std::size_t> shrinking{300, 300, 290, 250, 200, 150, 120, 100, 100};
  CHECK(decoder_flops(c, shrinking) < decoder_flops(c));
  CHECK_THROWS_AS(decoder_flops(c, std::vector<std::size_t>(8, 300)), ConfigError);
}

TEST_CASE("report rendering") {
  auto cfg = load_flops_config(kFig2);
  auto reports = compare_report(cfg.configs, cfg.baseline);
  const std::string csv = report_csv(reports);
  CHECK(csv.rfind("config,component,gflops,pct_of_backbone,pct_reduction_vs_baseline\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 5 * 3);
  CHECK(csv.find("mobius,decoder,") != std::string::npos);
  CHECK(report_csv(compare_report(cfg.configs, cfg.baseline)) == csv);

  auto j = report_json(reports, cfg.baseline);
  CHECK(j["baseline"] == "glee_maskdino");
  CHECK(j["reports"].size() == 3);
  CHECK(j["units"].contains("gflops"));
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(compare_report({}, "x"), ConfigError);
  CHECK_THROWS_AS(compare_report({config_named("mobius")}, "nobody"), ConfigError);
  CHECK_THROWS_AS(pixel_decoder_kind_from_string("fpn"), ConfigError);
  CHECK_THROWS_AS(decoder_kind_from_string("tiny"), ConfigError);
  ComponentConfig c;
  c.bottleneck_stride = 12;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  ComponentConfig z;
  z.dim = 0;
  CHECK_THROWS_AS(z.validate(), ConfigError);
  CHECK_THROWS_AS(component_config_from_json(nlohmann::json{{"pixel_decoder", "what"}}), ConfigError);
}

TEST_CASE("json round trip") {
  ComponentConfig c = config_named("glee_rtdetr");
  ComponentConfig back = component_config_from_json(to_json(c));
  CHECK(back.name == c.name);
  CHECK(back.pixel_decoder == PixelDecoderKind::rtdetr);
  CHECK(back.encoder_blocks == 1);
  CHECK(component_flops(back).row("total").gflops == component_flops(c).row("total").gflops);
}

}
