#include "bseg/flops.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "bseg/encoder.hpp"
#include "bseg/errors.hpp"

namespace bseg {

namespace flops {

double linear(double n, double in, double out) { return 2.0 * n * in * out; }

double attention(double n, double m, double d, double heads) {
  // q and output projections run over n rows, k and v over m rows; scores and
  // the weighted sum are 2nmd each; softmax is 3 per score (exp, sum, divide).
  return 2.0 * linear(n, d, d) + 2.0 * linear(m, d, d) + 4.0 * n * m * d + 3.0 * n * m * heads;
}

double bi_attention(double n, double t, double d, double heads) {
  // Both directions reuse the scores but each normalizes and aggregates.
  return 3.0 * linear(n, d, d) + 3.0 * linear(t, d, d) + 6.0 * n * t * d + 6.0 * n * t * heads;
}

double deform_sampling(double nq, double heads, double levels, double points, double head_dim) {
  // 4 taps x (weight, accumulate) = 8, then the attention weight = 2.
  return 10.0 * nq * heads * levels * points * head_dim;
}

double deform_attention(double nq, double nv, double d, double heads, double levels,
                        double points) {
  const double slots = heads * levels * points;
  return linear(nv, d, d) + linear(nq, d, 2.0 * slots) + linear(nq, d, slots) + 3.0 * nq * slots +
         deform_sampling(nq, heads, levels, points, d / heads) + linear(nq, d, d);
}

double ffn(double n, double d, double hidden) { return linear(n, d, hidden) + linear(n, hidden, d); }

double bilinear_resize(double n, double c) { return 8.0 * n * c; }

}  // namespace flops

std::string to_string(PixelDecoderKind kind) {
  switch (kind) {
    case PixelDecoderKind::maskdino: return "maskdino_pixdec";
    case PixelDecoderKind::rtdetr: return "rtdetr_pixdec";
    case PixelDecoderKind::bottleneck: return "bottleneck_pixdec";
  }
  return "?";
}

std::string to_string(DecoderKind kind) {
  return kind == DecoderKind::multi_scale ? "multi_scale_decoder" : "single_scale_decoder";
}

PixelDecoderKind pixel_decoder_kind_from_string(const std::string& name) {
  if (name == "maskdino_pixdec" || name == "maskdino") return PixelDecoderKind::maskdino;
  if (name == "rtdetr_pixdec" || name == "rtdetr") return PixelDecoderKind::rtdetr;
  if (name == "bottleneck_pixdec" || name == "bottleneck") return PixelDecoderKind::bottleneck;
  throw ConfigError("unknown pixel decoder kind '" + name + "'");
}

DecoderKind decoder_kind_from_string(const std::string& name) {
  if (name == "multi_scale_decoder" || name == "multi_scale") return DecoderKind::multi_scale;
  if (name == "single_scale_decoder" || name == "single_scale") return DecoderKind::single_scale;
  throw ConfigError("unknown decoder kind '" + name + "'");
}

void ComponentConfig::validate() const {
  auto positive = [this](std::size_t v, const char* field) {
    if (v == 0) throw ConfigError(name + ": " + field + " must be positive");
  };
  positive(image_height, "image_height");
  positive(image_width, "image_width");
  positive(dim, "dim");
  positive(d_ffn, "d_ffn");
  positive(decoder_ffn, "decoder_ffn");
  positive(heads, "heads");
  positive(points, "points");
  positive(encoder_blocks, "encoder_blocks");
  positive(decoder_layers, "decoder_layers");
  positive(categories, "categories");
  for (std::size_t c : backbone_channels) positive(c, "backbone_channels");
  if (dim % heads != 0) throw ConfigError(name + ": dim not divisible by heads");
  if (levels < 1 || levels > 4) throw ConfigError(name + ": levels must be in [1, 4]");
  if (bottleneck_stride != 8 && bottleneck_stride != 16 && bottleneck_stride != 32) {
    throw ConfigError(name + ": bottleneck stride must be 8, 16 or 32");
  }
  if (!(vision_encoder_gflops > 0.0)) throw ConfigError(name + ": vision encoder FLOPs must be positive");
}

std::array<double, 5> ComponentConfig::level_tokens() const {
  const auto grid = pyramid_grid(image_height, image_width);
  std::array<double, 5> n{};
  for (std::size_t i = 0; i < 5; ++i) n[i] = static_cast<double>(grid[i].cells());
  return n;
}

double ComponentConfig::bottleneck_tokens() const {
  const auto n = level_tokens();
  for (std::size_t i = 0; i < 5; ++i) {
    if (kPyramidStrides[i] == bottleneck_stride) return n[i];
  }
  throw ConfigError(name + ": invalid bottleneck stride");
}

double ComponentConfig::decoder_memory_tokens() const {
  if (decoder == DecoderKind::single_scale) return bottleneck_tokens();
  const auto n = level_tokens();
  double total = 0.0;
  for (std::size_t i = 1; i <= levels; ++i) total += n[i];
  return total;
}

double ComponentConfig::decoder_levels() const {
  return decoder == DecoderKind::single_scale ? 1.0 : static_cast<double>(levels);
}

namespace {

const double kGiga = 1e9;

double input_projections(const ComponentConfig& cfg, std::size_t count) {
  const auto n = cfg.level_tokens();
  double total = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    total += flops::linear(n[i], static_cast<double>(cfg.backbone_channels[i]),
                           static_cast<double>(cfg.dim));
  }
  return total;
}

// Upsampled enhanced map added to S2.
double mask_map(const ComponentConfig& cfg) {
  const double s2 = cfg.level_tokens()[0];
  const double d = static_cast<double>(cfg.dim);
  return flops::bilinear_resize(s2, d) + s2 * d;
}

}  // namespace

PixelDecoderCost pixel_decoder_flops(const ComponentConfig& cfg) {
  cfg.validate();
  const auto n = cfg.level_tokens();
  const double d = static_cast<double>(cfg.dim);
  const double h = static_cast<double>(cfg.heads);
  const double p = static_cast<double>(cfg.points);
  const double f = static_cast<double>(cfg.d_ffn);
  const double blocks = static_cast<double>(cfg.encoder_blocks);
  const double t = static_cast<double>(cfg.text_tokens);
  const double multi = n[1] + n[2] + n[3] + n[4];

  PixelDecoderCost cost;
  switch (cfg.pixel_decoder) {
    case PixelDecoderKind::maskdino: {
      const double block = flops::deform_attention(multi, multi, d, h, 4.0, p) + flops::ffn(multi, d, f);
      cost.scale_fusion = input_projections(cfg, 5) + blocks * block + mask_map(cfg);
      cost.modality_fusion = blocks * flops::bi_attention(multi, t, d, h);
      break;
    }
    case PixelDecoderKind::bottleneck: {
      const double b = cfg.bottleneck_tokens();
      const double block = flops::deform_attention(b, b, d, h, 1.0, p) +
                           flops::deform_attention(b, multi, d, h, 4.0, p) + flops::ffn(b, d, f);
      cost.scale_fusion = input_projections(cfg, 5) + blocks * block + mask_map(cfg);
      cost.modality_fusion = blocks * flops::bi_attention(b, t, d, h);
      break;
    }
    case PixelDecoderKind::rtdetr: {
      // Approximation: intra-scale attention on S5, then a convolutional
      // top-down/bottom-up fusion over S3..S5 built from 3x3 blocks.
      const double s3 = n[1], s4 = n[2], s5 = n[3];
      auto fusion_block = [&](double tokens) {
        return 2.0 * flops::linear(tokens, 2.0 * d, d) + 3.0 * 9.0 * flops::linear(tokens, d, d);
      };
      const double aifi = blocks * (flops::attention(s5, s5, d, h) + flops::ffn(s5, d, f));
      const double lateral = flops::linear(s5, d, d) + flops::linear(s4, d, d);
      const double downsample = 9.0 * flops::linear(s4, d, d) + 9.0 * flops::linear(s5, d, d);
      const double ccfm = fusion_block(s4) + fusion_block(s3) + fusion_block(s4) + fusion_block(s5);
      cost.scale_fusion = input_projections(cfg, 4) + aifi + lateral + downsample + ccfm;
      cost.modality_fusion = blocks * flops::bi_attention(s4 + s5, t, d, h);
      break;
    }
  }
  return cost;
}

double decoder_layer_flops(const ComponentConfig& cfg, double n) {
  if (n <= 0.0) return 0.0;
  const double d = static_cast<double>(cfg.dim);
  const double h = static_cast<double>(cfg.heads);
  const double p = static_cast<double>(cfg.points);
  const double c = static_cast<double>(cfg.categories);
  const double query_pos = flops::linear(n, 2.0 * d, d) + flops::linear(n, d, d);
  const double self_attn = flops::attention(n, n, d, h);
  const double cross =
      flops::deform_attention(n, cfg.decoder_memory_tokens(), d, h, cfg.decoder_levels(), p);
  const double ffn = flops::ffn(n, d, static_cast<double>(cfg.decoder_ffn));
  const double box = 2.0 * flops::linear(n, d, d) + flops::linear(n, d, 4.0);
  const double cls = flops::linear(n, d, d) + 2.0 * n * c * d;
  return query_pos + self_attn + cross + ffn + box + cls;
}

namespace {

void check_counts(const ComponentConfig& cfg, const std::vector<std::size_t>& counts) {
  if (counts.size() != cfg.decoder_layers) {
    throw ConfigError(cfg.name + ": " + std::to_string(counts.size()) +
                      " active counts for a " + std::to_string(cfg.decoder_layers) +
                      "-layer decoder");
  }
}

}  // namespace

double decoder_flops(const ComponentConfig& cfg, const std::vector<std::size_t>& active_counts) {
  cfg.validate();
  check_counts(cfg, active_counts);
  double total = 0.0;
  for (std::size_t n : active_counts) total += decoder_layer_flops(cfg, static_cast<double>(n));
  return total;
}

double decoder_flops(const ComponentConfig& cfg) {
  return decoder_flops(cfg, std::vector<std::size_t>(cfg.decoder_layers, cfg.queries));
}

double decoder_sampling_flops(const ComponentConfig& cfg,
                              const std::vector<std::size_t>& active_counts) {
  cfg.validate();
  check_counts(cfg, active_counts);
  const double h = static_cast<double>(cfg.heads);
  double total = 0.0;
  for (std::size_t n : active_counts) {
    total += flops::deform_sampling(static_cast<double>(n), h, cfg.decoder_levels(),
                                    static_cast<double>(cfg.points),
                                    static_cast<double>(cfg.dim) / h);
  }
  return total;
}

const ComponentRow& FlopsReport::row(const std::string& component) const {
  for (const ComponentRow& r : rows) {
    if (r.component == component) return r;
  }
  throw ConfigError("report for " + config + " has no component " + component);
}

FlopsReport component_flops(const ComponentConfig& cfg) {
  const PixelDecoderCost pix = pixel_decoder_flops(cfg);
  const double vis = cfg.vision_encoder_gflops;
  const double values[4] = {vis, pix.scale_fusion / kGiga, pix.modality_fusion / kGiga,
                            decoder_flops(cfg) / kGiga};
  const char* names[4] = {"vision_encoder", "pixel_decoder", "modality_fusion", "decoder"};
  FlopsReport report{cfg.name, {}};
  double total = 0.0;
  for (int i = 0; i < 4; ++i) {
    report.rows.push_back({names[i], values[i], 100.0 * values[i] / vis, 0.0});
    total += values[i];
  }
  report.rows.push_back({"total", total, 100.0 * total / vis, 0.0});
  return report;
}

std::vector<FlopsReport> compare_report(const std::vector<ComponentConfig>& configs,
                                        const std::string& baseline) {
  if (configs.empty()) throw ConfigError("compare_report: no configs");
  std::vector<FlopsReport> reports;
  const FlopsReport* base = nullptr;
  for (const ComponentConfig& cfg : configs) reports.push_back(component_flops(cfg));
  for (const FlopsReport& r : reports) {
    if (r.config == baseline) base = &r;
  }
  if (!base) throw ConfigError("compare_report: baseline '" + baseline + "' not among the configs");
  const FlopsReport base_copy = *base;
  for (FlopsReport& r : reports) {
    for (ComponentRow& row : r.rows) {
      const double b = base_copy.row(row.component).gflops;
      row.pct_reduction_vs_baseline = b > 0.0 ? 100.0 * (row.gflops / b - 1.0) : 0.0;
    }
  }
  return reports;
}

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string report_csv(const std::vector<FlopsReport>& reports) {
  std::ostringstream out;
  out << "config,component,gflops,pct_of_backbone,pct_reduction_vs_baseline\n";
  for (const FlopsReport& r : reports) {
    for (const ComponentRow& row : r.rows) {
      out << r.config << ',' << row.component << ',' << fixed(row.gflops, 4) << ','
          << fixed(row.pct_of_backbone, 2) << ',' << fixed(row.pct_reduction_vs_baseline, 2)
          << '\n';
    }
  }
  return out.str();
}

nlohmann::json report_json(const std::vector<FlopsReport>& reports, const std::string& baseline) {
  nlohmann::json j;
  j["units"] = {{"gflops", "GFLOPs (1 MAC = 2 FLOPs)"},
                {"pct_of_backbone", "percent of vision encoder FLOPs"},
                {"pct_reduction_vs_baseline", "signed percent change vs baseline"}};
  j["baseline"] = baseline;
  j["reports"] = nlohmann::json::array();
  for (const FlopsReport& r : reports) {
    nlohmann::json rows = nlohmann::json::array();
    for (const ComponentRow& row : r.rows) {
      rows.push_back({{"component", row.component},
                      {"gflops", std::round(row.gflops * 1e4) / 1e4},
                      {"pct_of_backbone", std::round(row.pct_of_backbone * 1e2) / 1e2},
                      {"pct_reduction_vs_baseline",
                       std::round(row.pct_reduction_vs_baseline * 1e2) / 1e2}});
    }
    j["reports"].push_back({{"config", r.config}, {"components", rows}});
  }
  return j;
}

ComponentConfig component_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("component config must be an object");
  ComponentConfig c;
  try {
    c.name = j.value("name", c.name);
    c.image_height = j.value("image_height", j.value("image_size", c.image_height));
    c.image_width = j.value("image_width", j.value("image_size", c.image_width));
    c.dim = j.value("dim", c.dim);
    c.d_ffn = j.value("d_ffn", c.d_ffn);
    c.decoder_ffn = j.value("decoder_ffn", c.decoder_ffn);
    c.heads = j.value("heads", c.heads);
    c.levels = j.value("levels", c.levels);
    c.points = j.value("points", c.points);
    c.encoder_blocks = j.value("encoder_blocks", c.encoder_blocks);
    c.decoder_layers = j.value("decoder_layers", c.decoder_layers);
    c.queries = j.value("queries", c.queries);
    c.bottleneck_stride = j.value("bottleneck_stride", c.bottleneck_stride);
    c.text_tokens = j.value("text_tokens", c.text_tokens);
    c.categories = j.value("categories", c.categories);
    if (j.contains("backbone_channels")) {
      c.backbone_channels = j.at("backbone_channels").get<std::array<std::size_t, 5>>();
    }
    if (j.contains("pixel_decoder")) {
      c.pixel_decoder = pixel_decoder_kind_from_string(j.at("pixel_decoder").get<std::string>());
    }
    if (j.contains("decoder")) {
      c.decoder = decoder_kind_from_string(j.at("decoder").get<std::string>());
    }
    c.vision_encoder_gflops = j.value("vision_encoder_gflops", c.vision_encoder_gflops);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("component config: ") + e.what());
  }
  c.validate();
  return c;
}

nlohmann::json to_json(const ComponentConfig& c) {
  return {{"name", c.name},
          {"image_height", c.image_height},
          {"image_width", c.image_width},
          {"dim", c.dim},
          {"d_ffn", c.d_ffn},
          {"decoder_ffn", c.decoder_ffn},
          {"heads", c.heads},
          {"levels", c.levels},
          {"points", c.points},
          {"encoder_blocks", c.encoder_blocks},
          {"decoder_layers", c.decoder_layers},
          {"queries", c.queries},
          {"bottleneck_stride", c.bottleneck_stride},
          {"text_tokens", c.text_tokens},
          {"categories", c.categories},
          {"backbone_channels", c.backbone_channels},
          {"pixel_decoder", to_string(c.pixel_decoder)},
          {"decoder", to_string(c.decoder)},
          {"vision_encoder_gflops", c.vision_encoder_gflops}};
}

}  // namespace bseg
