#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "bseg/config.hpp"
#include "bseg/decoder.hpp"
#include "bseg/encoder.hpp"
#include "bseg/scene.hpp"

namespace bseg {

struct Model {
  EncoderWeights encoder;
  DecoderWeights decoder;

  static Model random(const RunConfig& cfg);
};

// Everything up to the decoder: projected pyramid, enhanced bottleneck and
// text, mask embedding map and the language-selected queries.
struct Prepared {
  FeaturePyramid pyramid;
  EncoderState enhanced;
  FeatureMap mask_map;
  QuerySet selected;
};

Prepared prepare(const RunConfig& cfg, const Model& model, const SyntheticScene& scene);

struct ForwardOutput {
  Prepared prepared;
  DecodeResult decoded;
  MaskSet masks;
};

ForwardOutput run_forward(const RunConfig& cfg, const Model& model, const SyntheticScene& scene);

// Position-weighted sum over final query features, boxes and mask logits.
double forward_checksum(const ForwardOutput& out);
nlohmann::json forward_summary(const RunConfig& cfg, const ForwardOutput& out);

struct SweepArmResult {
  std::string strategy;
  std::string params;
  std::uint64_t seed = 0;
  std::vector<std::size_t> active_counts;  // padded with zeros to the decoder depth
  double decoder_gflops = 0.0;
  std::size_t final_active = 0;
  double survivor_confidence = 0.0;  // mean final confidence of surviving queries
  std::size_t kept_by_floor = 0;
};

struct SweepRow {
  std::string strategy;
  std::string params;
  std::size_t scenes = 0;
  double gflops_mean = 0.0, gflops_min = 0.0, gflops_max = 0.0;
  double final_active_mean = 0.0;
  std::size_t final_active_min = 0;
  double survivor_confidence_mean = 0.0;
  double kept_by_floor_mean = 0.0;
};

struct SweepResult {
  std::vector<SweepArmResult> per_scene;  // arm-major, seeds in config order
  std::vector<SweepRow> rows;
};

SweepResult run_prune_sweep(const RunConfig& cfg);
std::string sweep_csv(const std::vector<SweepRow>& rows);
std::string sweep_scene_csv(const std::vector<SweepArmResult>& per_scene);

// Each writes into out_dir and returns the written paths.
std::vector<std::string> cmd_forward(const RunConfig& cfg, const std::string& out_dir);
std::vector<std::string> cmd_prune_sweep(const RunConfig& cfg, const std::string& out_dir);
std::vector<std::string> cmd_flops(const std::string& config_path, const std::string& out_dir);

struct FlopsConfigFile {
  std::string baseline;
  std::vector<ComponentConfig> configs;
};
FlopsConfigFile load_flops_config(const std::string& path);

std::string format_double(double v, int digits = 6);

}  // namespace bseg
