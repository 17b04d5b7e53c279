#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "bseg/flops.hpp"
#include "bseg/pruning.hpp"
#include "bseg/scene.hpp"

namespace bseg {

enum class Preset { big, mobile, desk_test };

std::string to_string(Preset preset);
Preset preset_from_string(const std::string& name);

struct ModelConfig {
  std::size_t dim = 256;
  std::size_t heads = 8;
  std::size_t encoder_ffn = 2048;
  std::size_t decoder_ffn = 1024;
  std::size_t points = 4;
  std::size_t encoder_blocks = 6;
  std::size_t decoder_layers = 9;
  std::size_t queries = 300;
  int bottleneck_stride = 16;
  double log_scale = 2.659260036932778;
  double logit_bias = 0.0;
  std::array<std::size_t, 5> backbone_channels = {256, 512, 1024, 2048, 2048};
};

// One pruning arm of a sweep that deactivates to `budget` once after `layer`.
struct BudgetArm {
  std::size_t layer = 0;
  std::size_t budget = 0;
};

struct SweepConfig {
  std::vector<std::uint64_t> seeds;
  std::vector<PruneSchedule> schedules;
  std::vector<BudgetArm> topk;
  std::vector<BudgetArm> random;
  std::vector<std::size_t> layers;  // truncated decoder depths
  // Adds a random arm per schedule that copies its per-layer active counts.
  bool random_matched = true;
};

struct RunConfig {
  std::string name = "run";
  Preset preset = Preset::desk_test;
  std::size_t image_height = 128;
  std::size_t image_width = 128;
  ModelConfig model;
  SceneSpec scene;
  std::optional<PruneSchedule> schedule;
  SweepConfig sweep;
  std::uint64_t seed = 42;
  std::string out_dir = "out";

  void validate() const;
  // Scene spec with the image size and widths the model expects.
  SceneSpec scene_spec() const;
  // Cost-model view of this run (single-scale decoder, bottleneck pixel decoder).
  ComponentConfig component_config() const;
};

RunConfig preset_config(Preset preset);

// Reads a JSON run config; keys override the config's preset (or `preset`
// when given, which also wins over the file's own preset key).
RunConfig run_config_from_json(const nlohmann::json& j, std::optional<Preset> preset = std::nullopt);
RunConfig load_run_config(const std::string& path, std::optional<Preset> preset = std::nullopt);

nlohmann::json load_json_file(const std::string& path);
PruneSchedule schedule_from_json(const nlohmann::json& j, std::size_t layers);
nlohmann::json to_json(const PruneSchedule& s);
nlohmann::json to_json(const RunConfig& c);

}  // namespace bseg
