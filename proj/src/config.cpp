#include "bseg/config.hpp"

#include <fstream>

#include "bseg/errors.hpp"

namespace bseg {

std::string to_string(Preset preset) {
  switch (preset) {
    case Preset::big: return "big";
    case Preset::mobile: return "mobile";
    case Preset::desk_test: return "desk-test";
  }
  return "?";
}

Preset preset_from_string(const std::string& name) {
  if (name == "big") return Preset::big;
  if (name == "mobile") return Preset::mobile;
  if (name == "desk-test" || name == "desk_test") return Preset::desk_test;
  throw ConfigError("unknown preset '" + name + "' (expected big, mobile or desk-test)");
}

RunConfig preset_config(Preset preset) {
  RunConfig c;
  c.preset = preset;
  c.name = to_string(preset);
  switch (preset) {
    case Preset::big:
      c.image_height = c.image_width = 800;
      break;
    case Preset::mobile:
      c.image_height = c.image_width = 384;
      c.model.encoder_blocks = 3;
      c.model.encoder_ffn = 1024;
      c.model.backbone_channels = {48, 80, 160, 256, 256};
      break;
    case Preset::desk_test:
      c.image_height = c.image_width = 128;
      c.model.dim = 128;
      c.model.encoder_ffn = 256;
      c.model.decoder_ffn = 256;
      c.model.encoder_blocks = 2;
      c.model.decoder_layers = 6;
      c.model.queries = 48;
      c.model.backbone_channels = {32, 32, 32, 32, 32};
      break;
  }
  for (std::uint64_t s = 0; s < 20; ++s) c.sweep.seeds.push_back(s + 1);
  return c;
}

void RunConfig::validate() const {
  if (image_height == 0 || image_width == 0) throw ConfigError(name + ": empty image");
  const ModelConfig& m = model;
  if (m.dim == 0 || m.heads == 0 || m.dim % m.heads != 0) {
    throw ConfigError(name + ": dim must be a positive multiple of heads");
  }
  if (m.dim % 4 != 0) throw ConfigError(name + ": dim must be divisible by 4");
  if (m.encoder_blocks == 0 || m.decoder_layers == 0 || m.points == 0) {
    throw ConfigError(name + ": encoder blocks, decoder layers and points must be positive");
  }
  if (m.bottleneck_stride != 8 && m.bottleneck_stride != 16 && m.bottleneck_stride != 32) {
    throw ConfigError(name + ": bottleneck stride must be 8, 16 or 32");
  }
  const auto grid = pyramid_grid(image_height, image_width);
  std::size_t tokens = 0;
  for (std::size_t i = 0; i < 5; ++i) {
    if (kPyramidStrides[i] == m.bottleneck_stride) tokens = grid[i].cells();
  }
  if (m.queries == 0 || m.queries > tokens) {
    throw ConfigError(name + ": queries must be in [1, " + std::to_string(tokens) + "]");
  }
  scene_spec().validate();
  if (schedule) {
    schedule->validate();
    if (schedule->layers != m.decoder_layers) {
      throw ConfigError(name + ": schedule layer count differs from the decoder");
    }
  }
  for (const PruneSchedule& s : sweep.schedules) {
    s.validate();
    if (s.layers != m.decoder_layers) {
      throw ConfigError(name + ": sweep schedule layer count differs from the decoder");
    }
  }
  for (const auto* arms : {&sweep.topk, &sweep.random}) {
    for (const BudgetArm& a : *arms) {
      if (a.layer + 1 >= m.decoder_layers) {
        throw ConfigError(name + ": budget arms must act before the last layer");
      }
      if (a.budget > m.queries) throw ConfigError(name + ": budget exceeds the query count");
    }
  }
  for (std::size_t depth : sweep.layers) {
    if (depth == 0 || depth > m.decoder_layers) {
      throw ConfigError(name + ": truncated depth must be in [1, decoder_layers]");
    }
  }
}

SceneSpec RunConfig::scene_spec() const {
  SceneSpec s = scene;
  s.image_height = image_height;
  s.image_width = image_width;
  s.backbone_channels = model.backbone_channels;
  s.text_dim = model.dim;
  return s;
}

ComponentConfig RunConfig::component_config() const {
  ComponentConfig c;
  c.name = name;
  c.image_height = image_height;
  c.image_width = image_width;
  c.dim = model.dim;
  c.d_ffn = model.encoder_ffn;
  c.decoder_ffn = model.decoder_ffn;
  c.heads = model.heads;
  c.points = model.points;
  c.encoder_blocks = model.encoder_blocks;
  c.decoder_layers = model.decoder_layers;
  c.queries = model.queries;
  c.bottleneck_stride = model.bottleneck_stride;
  c.text_tokens = scene.categories * scene.tokens_per_category;
  c.categories = scene.categories;
  c.backbone_channels = model.backbone_channels;
  c.pixel_decoder = PixelDecoderKind::bottleneck;
  c.decoder = DecoderKind::single_scale;
  return c;
}

nlohmann::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
}

PruneSchedule schedule_from_json(const nlohmann::json& j, std::size_t layers) {
  PruneSchedule s;
  s.layers = layers;
  s.kind = schedule_kind_from_string(j.value("kind", std::string("sigmoid")));
  if (s.kind != ScheduleKind::sigmoid) s.steepness = kDefaultCurveAlpha;
  s.b_low = j.value("b_low", s.b_low);
  s.b_high = j.value("b_high", s.b_high);
  s.steepness = j.value("steepness", s.steepness);
  s.layers = j.value("layers", s.layers);
  s.min_keep = j.value("min_keep", s.min_keep);
  s.validate();
  return s;
}

nlohmann::json to_json(const PruneSchedule& s) {
  return {{"kind", to_string(s.kind)}, {"b_low", s.b_low},     {"b_high", s.b_high},
          {"steepness", s.steepness},  {"layers", s.layers},   {"min_keep", s.min_keep}};
}

namespace {

std::vector<BudgetArm> arms_from_json(const nlohmann::json& j) {
  std::vector<BudgetArm> arms;
  for (const auto& a : j) arms.push_back({a.at("layer").get<std::size_t>(), a.at("budget").get<std::size_t>()});
  return arms;
}

nlohmann::json arms_json(const std::vector<BudgetArm>& arms) {
  nlohmann::json out = nlohmann::json::array();
  for (const BudgetArm& a : arms) out.push_back({{"layer", a.layer}, {"budget", a.budget}});
  return out;
}

}  // namespace

RunConfig run_config_from_json(const nlohmann::json& j, std::optional<Preset> preset) {
  if (!j.is_object()) throw ConfigError("run config must be a JSON object");
  try {
    const Preset base = preset ? *preset : preset_from_string(j.value("preset", std::string("desk-test")));
    RunConfig c = preset_config(base);
    c.name = j.value("name", c.name);
    if (j.contains("image_size")) c.image_height = c.image_width = j.at("image_size").get<std::size_t>();
    c.image_height = j.value("image_height", c.image_height);
    c.image_width = j.value("image_width", c.image_width);
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);

    if (j.contains("model")) {
      const auto& m = j.at("model");
      ModelConfig& mc = c.model;
      mc.dim = m.value("dim", mc.dim);
      mc.heads = m.value("heads", mc.heads);
      mc.encoder_ffn = m.value("encoder_ffn", mc.encoder_ffn);
      mc.decoder_ffn = m.value("decoder_ffn", mc.decoder_ffn);
      mc.points = m.value("points", mc.points);
      mc.encoder_blocks = m.value("encoder_blocks", mc.encoder_blocks);
      mc.decoder_layers = m.value("decoder_layers", mc.decoder_layers);
      mc.queries = m.value("queries", mc.queries);
      mc.bottleneck_stride = m.value("bottleneck_stride", mc.bottleneck_stride);
      mc.log_scale = m.value("log_scale", mc.log_scale);
      mc.logit_bias = m.value("logit_bias", mc.logit_bias);
      if (m.contains("backbone_channels")) {
        mc.backbone_channels = m.at("backbone_channels").get<std::array<std::size_t, 5>>();
      }
    }
    if (j.contains("scene")) {
      const auto& s = j.at("scene");
      SceneSpec& sc = c.scene;
      sc.categories = s.value("categories", sc.categories);
      sc.tokens_per_category = s.value("tokens_per_category", sc.tokens_per_category);
      sc.objects = s.value("objects", sc.objects);
      sc.field_waves = s.value("field_waves", sc.field_waves);
      sc.field_scale = s.value("field_scale", sc.field_scale);
      sc.bump_amplitude = s.value("bump_amplitude", sc.bump_amplitude);
    }
    if (j.contains("schedule") && !j.at("schedule").is_null()) {
      c.schedule = schedule_from_json(j.at("schedule"), c.model.decoder_layers);
    }
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      SweepConfig& sw = c.sweep;
      if (s.contains("seeds")) {
        sw.seeds = s.at("seeds").get<std::vector<std::uint64_t>>();
      } else if (s.contains("seed_count")) {
        const auto n = s.at("seed_count").get<std::uint64_t>();
        const auto first = s.value("seed_start", std::uint64_t{1});
        sw.seeds.clear();
        for (std::uint64_t i = 0; i < n; ++i) sw.seeds.push_back(first + i);
      }
      sw.schedules.clear();
      for (const auto& sch : s.value("schedules", nlohmann::json::array())) {
        sw.schedules.push_back(schedule_from_json(sch, c.model.decoder_layers));
      }
      sw.topk = arms_from_json(s.value("topk", nlohmann::json::array()));
      sw.random = arms_from_json(s.value("random", nlohmann::json::array()));
      sw.layers = s.value("layers", std::vector<std::size_t>{});
      sw.random_matched = s.value("random_matched", sw.random_matched);
    }
    c.validate();
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
}

RunConfig load_run_config(const std::string& path, std::optional<Preset> preset) {
  return run_config_from_json(load_json_file(path), preset);
}

nlohmann::json to_json(const RunConfig& c) {
  const ModelConfig& m = c.model;
  const SceneSpec& s = c.scene;
  nlohmann::json schedules = nlohmann::json::array();
  for (const PruneSchedule& p : c.sweep.schedules) schedules.push_back(to_json(p));
  return {{"name", c.name},
          {"preset", to_string(c.preset)},
          {"image_height", c.image_height},
          {"image_width", c.image_width},
          {"seed", c.seed},
          {"model",
           {{"dim", m.dim},
            {"heads", m.heads},
            {"encoder_ffn", m.encoder_ffn},
            {"decoder_ffn", m.decoder_ffn},
            {"points", m.points},
            {"encoder_blocks", m.encoder_blocks},
            {"decoder_layers", m.decoder_layers},
            {"queries", m.queries},
            {"bottleneck_stride", m.bottleneck_stride},
            {"log_scale", m.log_scale},
            {"logit_bias", m.logit_bias},
            {"backbone_channels", m.backbone_channels}}},
          {"scene",
           {{"categories", s.categories},
            {"tokens_per_category", s.tokens_per_category},
            {"objects", s.objects},
            {"field_waves", s.field_waves},
            {"field_scale", s.field_scale},
            {"bump_amplitude", s.bump_amplitude}}},
          {"schedule", c.schedule ? to_json(*c.schedule) : nlohmann::json(nullptr)},
          {"sweep",
           {{"seeds", c.sweep.seeds},
            {"schedules", schedules},
            {"topk", arms_json(c.sweep.topk)},
            {"random", arms_json(c.sweep.random)},
            {"layers", c.sweep.layers},
            {"random_matched", c.sweep.random_matched}}}};
}

}  // namespace bseg
