#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <vector>

#include <json.hpp>

namespace bseg {

// Closed-form operation counts. One multiply-accumulate is two FLOPs;
// normalization layers are not counted.
namespace flops {

double linear(double n, double in, double out);
// n queries against m keys: four d x d projections, scores, softmax, weighted sum.
double attention(double n, double m, double d, double heads);
// Fusion between n image and t text tokens sharing one score matrix.
double bi_attention(double n, double t, double d, double heads);
// Bilinear sampling and weighting of nq * heads * levels * points samples.
double deform_sampling(double nq, double heads, double levels, double points, double head_dim);
// nq queries sampling nv value tokens spread over `levels` maps.
double deform_attention(double nq, double nv, double d, double heads, double levels,
                        double points);
double ffn(double n, double d, double hidden);
// Resize of an n-pixel, c-channel output (four taps, weight and accumulate).
double bilinear_resize(double n, double c);

}  // namespace flops

enum class PixelDecoderKind { maskdino, rtdetr, bottleneck };
enum class DecoderKind { multi_scale, single_scale };

std::string to_string(PixelDecoderKind kind);
std::string to_string(DecoderKind kind);
PixelDecoderKind pixel_decoder_kind_from_string(const std::string& name);
DecoderKind decoder_kind_from_string(const std::string& name);

struct ComponentConfig {
  std::string name = "config";
  std::size_t image_height = 800;
  std::size_t image_width = 800;
  std::size_t dim = 256;
  std::size_t d_ffn = 2048;        // pixel decoder FFN
  std::size_t decoder_ffn = 1024;  // transformer decoder FFN
  std::size_t heads = 8;
  std::size_t levels = 4;
  std::size_t points = 4;
  std::size_t encoder_blocks = 6;
  std::size_t decoder_layers = 9;
  std::size_t queries = 300;
  int bottleneck_stride = 16;
  std::size_t text_tokens = 8;
  std::size_t categories = 80;
  std::array<std::size_t, 5> backbone_channels = {256, 512, 1024, 2048, 2048};
  PixelDecoderKind pixel_decoder = PixelDecoderKind::bottleneck;
  DecoderKind decoder = DecoderKind::single_scale;
  double vision_encoder_gflops = 52.4;

  void validate() const;
  // Tokens in S2..S6.
  std::array<double, 5> level_tokens() const;
  double bottleneck_tokens() const;
  // Tokens and level count read by the decoder's cross-attention.
  double decoder_memory_tokens() const;
  double decoder_levels() const;
};

struct PixelDecoderCost {
  double scale_fusion = 0.0;
  double modality_fusion = 0.0;
};

PixelDecoderCost pixel_decoder_flops(const ComponentConfig& cfg);

// One decoder layer over n active queries. Zero when n is zero.
double decoder_layer_flops(const ComponentConfig& cfg, double n);
// Sum over layers; active_counts must have decoder_layers entries.
double decoder_flops(const ComponentConfig& cfg, const std::vector<std::size_t>& active_counts);
double decoder_flops(const ComponentConfig& cfg);  // constant `queries` per layer
// The bilinear sampling part of the cross-attention only.
double decoder_sampling_flops(const ComponentConfig& cfg,
                              const std::vector<std::size_t>& active_counts);

struct ComponentRow {
  std::string component;
  double gflops = 0.0;
  double pct_of_backbone = 0.0;
  // Signed change relative to the baseline, negative when cheaper.
  double pct_reduction_vs_baseline = 0.0;
};

struct FlopsReport {
  std::string config;
  std::vector<ComponentRow> rows;  // vision_encoder, pixel_decoder, modality_fusion, decoder, total

  const ComponentRow& row(const std::string& component) const;
};

// Absolute component costs without the baseline comparison filled in.
FlopsReport component_flops(const ComponentConfig& cfg);

std::vector<FlopsReport> compare_report(const std::vector<ComponentConfig>& configs,
                                        const std::string& baseline);

std::string report_csv(const std::vector<FlopsReport>& reports);
nlohmann::json report_json(const std::vector<FlopsReport>& reports, const std::string& baseline);

ComponentConfig component_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ComponentConfig& cfg);

}  // namespace bseg
