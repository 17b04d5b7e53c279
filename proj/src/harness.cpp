#include "bseg/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include "bseg/errors.hpp"
#include "bseg/flops.hpp"
#include "bseg/pruning.hpp"
#include "bseg/rng.hpp"

namespace bseg {

std::string format_double(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

namespace {

std::string format_sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return buf;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  out << content;
}

std::filesystem::path ensure_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  std::error_code ec;
  std::filesystem::create_directories(p, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir + "': " + ec.message());
  return p;
}

}  // namespace

Model Model::random(const RunConfig& cfg) {
  const ModelConfig& m = cfg.model;
  Rng rng(cfg.seed, "model");
  EncoderShape es;
  es.dim = m.dim;
  es.heads = m.heads;
  es.ffn_dim = m.encoder_ffn;
  es.points = m.points;
  es.blocks = m.encoder_blocks;
  es.backbone_channels = m.backbone_channels;
  DecoderShape ds;
  ds.dim = m.dim;
  ds.heads = m.heads;
  ds.ffn_dim = m.decoder_ffn;
  ds.points = m.points;
  ds.layers = m.decoder_layers;
  ds.log_scale = m.log_scale;
  ds.logit_bias = m.logit_bias;
  return {EncoderWeights::random(es, rng.fork("encoder")),
          DecoderWeights::random(ds, rng.fork("decoder"))};
}

Prepared prepare(const RunConfig& cfg, const Model& model, const SyntheticScene& scene) {
  Prepared p;
  p.pyramid = project_pyramid(scene.pyramid, model.encoder);
  const Bottleneck b = select_bottleneck(p.pyramid, cfg.model.bottleneck_stride);
  p.enhanced = encode(b, scene.text, p.pyramid, model.encoder);
  p.mask_map = build_mask_embedding(p.enhanced.bottleneck, p.pyramid.s2());
  p.selected = language_select(p.enhanced.bottleneck, p.enhanced.text, cfg.model.queries,
                               model.decoder);
  return p;
}

ForwardOutput run_forward(const RunConfig& cfg, const Model& model, const SyntheticScene& scene) {
  ForwardOutput out;
  out.prepared = prepare(cfg, model, scene);
  out.decoded = decode(out.prepared.selected, out.prepared.enhanced.bottleneck, model.decoder,
                       out.prepared.enhanced.text, cfg.schedule);
  out.masks = predict_masks(out.decoded.queries, out.prepared.mask_map);
  return out;
}

double forward_checksum(const ForwardOutput& out) {
  double sum = 0.0;
  std::size_t k = 0;
  auto take = [&sum, &k](double v) { sum += static_cast<double>(k++ % 7 + 1) * v; };
  const QuerySet& q = out.decoded.queries;
  for (std::size_t i : q.active_indices()) {
    for (double v : q.features.row(i)) take(v);
    take(q.boxes[i].cx);
    take(q.boxes[i].cy);
    take(q.boxes[i].w);
    take(q.boxes[i].h);
    take(q.scores[i]);
  }
  for (const Tensor2D& m : out.masks.logits) {
    for (double v : m.data()) take(v);
  }
  return sum;
}

nlohmann::json forward_summary(const RunConfig& cfg, const ForwardOutput& out) {
  const Prepared& p = out.prepared;
  const QuerySet& q = out.decoded.queries;
  nlohmann::json levels = nlohmann::json::array();
  for (const FeatureMap& m : p.pyramid.levels) {
    levels.push_back({{"stride", m.stride()}, {"height", m.height()}, {"width", m.width()},
                      {"channels", m.channels()}});
  }
  const std::vector<std::size_t> active = q.active_indices();
  double smin = std::numeric_limits<double>::infinity(), smax = -smin, smean = 0.0, cmean = 0.0;
  for (std::size_t i : active) {
    smin = std::min(smin, q.scores[i]);
    smax = std::max(smax, q.scores[i]);
    smean += q.scores[i];
    cmean += q.confidence[i];
  }
  if (!active.empty()) {
    smean /= static_cast<double>(active.size());
    cmean /= static_cast<double>(active.size());
  }
  double fg = 0.0;
  for (std::size_t m = 0; m < out.masks.size(); ++m) fg += static_cast<double>(out.masks.foreground(m));
  if (out.masks.size() > 0) fg /= static_cast<double>(out.masks.size());

  nlohmann::json thresholds = nlohmann::json::array();
  for (double t : out.decoded.trace.thresholds) thresholds.push_back(format_double(t, 6));

  return {{"config", cfg.name},
          {"preset", to_string(cfg.preset)},
          {"seed", cfg.seed},
          {"image", {{"height", cfg.image_height}, {"width", cfg.image_width}}},
          {"pyramid", levels},
          {"bottleneck",
           {{"stride", p.enhanced.bottleneck.source_stride},
            {"height", p.enhanced.bottleneck.height},
            {"width", p.enhanced.bottleneck.width},
            {"tokens", p.enhanced.bottleneck.size()}}},
          {"queries", {{"selected", p.selected.size()}, {"final_active", active.size()}}},
          {"active_counts", out.decoded.trace.active_counts},
          {"thresholds", thresholds},
          {"scores",
           {{"units", "scaled cosine, confidence = sigmoid(score + logit_bias)"},
            {"min", format_double(active.empty() ? 0.0 : smin, 6)},
            {"max", format_double(active.empty() ? 0.0 : smax, 6)},
            {"mean", format_double(smean, 6)},
            {"mean_confidence", format_double(cmean, 6)}}},
          {"masks",
           {{"count", out.masks.size()},
            {"height", out.masks.height},
            {"width", out.masks.width},
            {"stride", out.masks.stride},
            {"mean_foreground_pixels", format_double(fg, 3)}}},
          {"checksum", format_sci(forward_checksum(out))}};
}

std::vector<std::string> cmd_forward(const RunConfig& cfg, const std::string& out_dir) {
  cfg.validate();
  const Model model = Model::random(cfg);
  const SyntheticScene scene = gen_scene(cfg.seed, cfg.scene_spec());
  const ForwardOutput out = run_forward(cfg, model, scene);
  const auto dir = ensure_dir(out_dir);
  const std::string path = (dir / "forward_summary.json").string();
  write_file(path, forward_summary(cfg, out).dump(2) + "\n");
  return {path};
}

namespace {

struct Arm {
  std::string strategy;
  std::string params;
};

std::string schedule_params(const PruneSchedule& s) {
  return "kind=" + to_string(s.kind) + ";b_low=" + format_double(s.b_low, 3) +
         ";b_high=" + format_double(s.b_high, 3) + ";steepness=" + format_double(s.steepness, 3) +
         ";min_keep=" + std::to_string(s.min_keep);
}

SweepArmResult summarize(const std::string& strategy, const std::string& params,
                         std::uint64_t seed, const DecodeResult& r, std::size_t layers,
                         const ComponentConfig& cost) {
  SweepArmResult a;
  a.strategy = strategy;
  a.params = params;
  a.seed = seed;
  a.active_counts = r.trace.active_counts;
  a.active_counts.resize(layers, 0);
  a.decoder_gflops = decoder_flops(cost, a.active_counts) / 1e9;
  a.final_active = r.trace.final_active;
  a.kept_by_floor = r.trace.kept_by_floor;
  const std::vector<std::size_t> alive = r.queries.active_indices();
  for (std::size_t i : alive) a.survivor_confidence += r.queries.confidence[i];
  if (!alive.empty()) a.survivor_confidence /= static_cast<double>(alive.size());
  return a;
}

LayerHook budget_hook(BaselineStrategy strategy, BudgetArm arm, std::uint64_t seed) {
  return [strategy, arm, seed](std::size_t layer, QuerySet& q, DecodeTrace&) {
    if (layer == arm.layer) baseline_prune(q, strategy, arm.budget, mix64(seed ^ layer));
  };
}

// Random deactivation that reproduces a reference run's per-layer counts.
LayerHook matched_random_hook(std::vector<std::size_t> counts, std::size_t final_active,
                              std::uint64_t seed) {
  return [counts = std::move(counts), final_active, seed](std::size_t layer, QuerySet& q,
                                                           DecodeTrace&) {
    const std::size_t target = layer + 1 < counts.size() ? counts[layer + 1] : final_active;
    if (target < q.active_count()) {
      baseline_prune(q, BaselineStrategy::random, target, mix64(seed + 0x9e37 * (layer + 1)));
    }
  };
}

std::vector<SweepArmResult> sweep_scene(const RunConfig& cfg, const Model& model,
                                        std::uint64_t seed, const ComponentConfig& cost) {
  const SyntheticScene scene = gen_scene(seed, cfg.scene_spec());
  const Prepared p = prepare(cfg, model, scene);
  const Bottleneck& mem = p.enhanced.bottleneck;
  const TextBank& text = p.enhanced.text;
  const std::size_t L = cfg.model.decoder_layers;
  const std::size_t K = cfg.model.queries;
  std::vector<SweepArmResult> out;

  out.push_back(summarize("none", "queries=" + std::to_string(K), seed,
                          decode(p.selected, mem, model.decoder, text), L, cost));
  for (const PruneSchedule& s : cfg.sweep.schedules) {
    const DecodeResult r = decode(p.selected, mem, model.decoder, text, s);
    out.push_back(summarize(to_string(s.kind), schedule_params(s), seed, r, L, cost));
    if (cfg.sweep.random_matched) {
      const DecodeResult rr = decode(p.selected, mem, model.decoder, text,
                                     matched_random_hook(r.trace.active_counts,
                                                         r.trace.final_active, mix64(seed)));
      out.push_back(summarize("random_matched", "matches=" + schedule_params(s), seed, rr, L, cost));
    }
  }
  for (const BudgetArm& a : cfg.sweep.topk) {
    const std::string params = "layer=" + std::to_string(a.layer) + ";budget=" + std::to_string(a.budget);
    out.push_back(summarize("topk", params, seed,
                            decode(p.selected, mem, model.decoder, text,
                                   budget_hook(BaselineStrategy::topk, a, seed)),
                            L, cost));
  }
  for (const BudgetArm& a : cfg.sweep.random) {
    const std::string params = "layer=" + std::to_string(a.layer) + ";budget=" + std::to_string(a.budget);
    out.push_back(summarize("random", params, seed,
                            decode(p.selected, mem, model.decoder, text,
                                   budget_hook(BaselineStrategy::random, a, mix64(seed))),
                            L, cost));
  }
  for (std::size_t depth : cfg.sweep.layers) {
    DecoderWeights truncated = model.decoder;
    truncated.layers.resize(depth);
    out.push_back(summarize("layers", "depth=" + std::to_string(depth), seed,
                            decode(p.selected, mem, truncated, text), L, cost));
  }
  return out;
}

}  // namespace

SweepResult run_prune_sweep(const RunConfig& cfg) {
  cfg.validate();
  if (cfg.sweep.seeds.empty()) throw ConfigError(cfg.name + ": sweep has no seeds");
  const Model model = Model::random(cfg);
  const ComponentConfig cost = cfg.component_config();
  const std::vector<std::uint64_t>& seeds = cfg.sweep.seeds;
  std::vector<std::vector<SweepArmResult>> per_seed(seeds.size());

  // Scenes are independent; results land in fixed slots and are merged below.
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < static_cast<long>(seeds.size()); ++i) {
    per_seed[static_cast<std::size_t>(i)] =
        sweep_scene(cfg, model, seeds[static_cast<std::size_t>(i)], cost);
  }

  SweepResult result;
  const std::size_t arms = per_seed.front().size();
  for (std::size_t a = 0; a < arms; ++a) {
    SweepRow row;
    row.strategy = per_seed.front()[a].strategy;
    row.params = per_seed.front()[a].params;
    row.scenes = seeds.size();
    row.gflops_min = std::numeric_limits<double>::infinity();
    row.gflops_max = -row.gflops_min;
    row.final_active_min = std::numeric_limits<std::size_t>::max();
    for (const auto& scene : per_seed) {
      const SweepArmResult& r = scene[a];
      result.per_scene.push_back(r);
      row.gflops_mean += r.decoder_gflops;
      row.gflops_min = std::min(row.gflops_min, r.decoder_gflops);
      row.gflops_max = std::max(row.gflops_max, r.decoder_gflops);
      row.final_active_mean += static_cast<double>(r.final_active);
      row.final_active_min = std::min(row.final_active_min, r.final_active);
      row.survivor_confidence_mean += r.survivor_confidence;
      row.kept_by_floor_mean += static_cast<double>(r.kept_by_floor);
    }
    const double n = static_cast<double>(seeds.size());
    row.gflops_mean /= n;
    row.final_active_mean /= n;
    row.survivor_confidence_mean /= n;
    row.kept_by_floor_mean /= n;
    result.rows.push_back(row);
  }
  return result;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream out;
  out << "strategy,params,scenes,decoder_gflops_mean,decoder_gflops_min,decoder_gflops_max,"
         "final_active_mean,final_active_min,survivor_confidence_mean,kept_by_floor_mean\n";
  for (const SweepRow& r : rows) {
    out << r.strategy << ',' << r.params << ',' << r.scenes << ',' << format_double(r.gflops_mean, 6)
        << ',' << format_double(r.gflops_min, 6) << ',' << format_double(r.gflops_max, 6) << ','
        << format_double(r.final_active_mean, 2) << ',' << r.final_active_min << ','
        << format_double(r.survivor_confidence_mean, 6) << ','
        << format_double(r.kept_by_floor_mean, 2) << '\n';
  }
  return out.str();
}

std::string sweep_scene_csv(const std::vector<SweepArmResult>& per_scene) {
  std::ostringstream out;
  out << "strategy,params,seed,decoder_gflops,final_active,survivor_confidence,kept_by_floor,"
         "active_counts\n";
  for (const SweepArmResult& r : per_scene) {
    out << r.strategy << ',' << r.params << ',' << r.seed << ',' << format_double(r.decoder_gflops, 6)
        << ',' << r.final_active << ',' << format_double(r.survivor_confidence, 6) << ','
        << r.kept_by_floor << ',';
    for (std::size_t i = 0; i < r.active_counts.size(); ++i) {
      out << (i ? ";" : "") << r.active_counts[i];
    }
    out << '\n';
  }
  return out.str();
}

std::vector<std::string> cmd_prune_sweep(const RunConfig& cfg, const std::string& out_dir) {
  const SweepResult result = run_prune_sweep(cfg);
  const auto dir = ensure_dir(out_dir);
  const std::string summary = (dir / "prune_sweep.csv").string();
  const std::string scenes = (dir / "prune_sweep_scenes.csv").string();
  write_file(summary, sweep_csv(result.rows));
  write_file(scenes, sweep_scene_csv(result.per_scene));
  return {summary, scenes};
}

FlopsConfigFile load_flops_config(const std::string& path) {
  const nlohmann::json j = load_json_file(path);
  FlopsConfigFile f;
  try {
    if (!j.contains("configs") || !j.at("configs").is_array() || j.at("configs").empty()) {
      throw ConfigError("'" + path + "' lists no configs");
    }
    for (const auto& c : j.at("configs")) f.configs.push_back(component_config_from_json(c));
    f.baseline = j.value("baseline", f.configs.front().name);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("flops config '" + path + "': " + e.what());
  }
  return f;
}

std::vector<std::string> cmd_flops(const std::string& config_path, const std::string& out_dir) {
  const FlopsConfigFile f = load_flops_config(config_path);
  const std::vector<FlopsReport> reports = compare_report(f.configs, f.baseline);
  const auto dir = ensure_dir(out_dir);
  const std::string csv = (dir / "flops_report.csv").string();
  const std::string json = (dir / "flops_report.json").string();
  write_file(csv, report_csv(reports));
  write_file(json, report_json(reports, f.baseline).dump(2) + "\n");
  return {csv, json};
}

}  // namespace bseg
