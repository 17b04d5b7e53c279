#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "bseg/attention.hpp"
#include "bseg/encoder.hpp"
#include "bseg/pruning.hpp"
#include "bseg/queries.hpp"
#include "bseg/rng.hpp"
#include "bseg/tensor.hpp"

namespace bseg {

// Stack of linear maps with ReLU between them (none after the last).
struct Mlp {
  std::vector<Linear> layers;

  std::size_t in_dim() const { return layers.front().in_dim(); }
  std::size_t out_dim() const { return layers.back().out_dim(); }
  Tensor2D forward(const Tensor2D& input) const;

  // dims = {in, hidden..., out}. The last layer is scaled by last_gain so
  // residual heads start close to the identity.
  static Mlp random(const std::vector<std::size_t>& dims, Rng rng, double last_gain = 1.0);
};

struct DecoderLayerWeights {
  Mlp query_pos;  // sine box embedding (2d) -> d -> d
  AttentionParams self_attn;
  DeformParams cross_attn;  // one level: the enhanced bottleneck
  Linear ffn_in, ffn_out;
  Mlp box_head;  // d -> d -> d -> 4, residual in inverse-sigmoid space
  Linear class_proj;
  NormAffine norm_self, norm_cross, norm_ffn;
};

struct DecoderShape {
  std::size_t dim = 256;
  std::size_t heads = 8;
  std::size_t ffn_dim = 1024;
  std::size_t points = 4;
  std::size_t layers = 9;
  double log_scale = 2.659260036932778;  // ln(1 / 0.07)
  double logit_bias = 0.0;
};

struct DecoderWeights {
  std::size_t dim = 0;
  std::size_t groups = 1;
  double eps = kNormEps;
  double log_scale = 0.0;   // s in exp(s) * cosine
  double logit_bias = 0.0;  // added to the score before the sigmoid that maps it to a confidence
  Mlp select_box;           // d -> d -> d -> 4, box head used at selection time
  std::vector<DecoderLayerWeights> layers;

  static DecoderWeights random(const DecoderShape& shape, Rng rng);
};

// exp(s) * cos(q, z).
double scaled_cosine(std::span<const double> q, std::span<const double> z, double s);

double score_to_confidence(double score, double logit_bias);

// Fills class_scores, scores and confidence of query rows[k] from embed row k.
void score_queries(QuerySet& queries, const std::vector<std::size_t>& rows, const Tensor2D& embed,
                   const TextBank& text, double log_scale, double logit_bias);

// Ranks bottleneck tokens by their best scaled cosine against the pooled
// category embeddings and keeps the top K as decoder queries.
QuerySet language_select(const Bottleneck& enhanced, const TextBank& text, std::size_t k,
                         const DecoderWeights& weights);

// 4 * (d / 2) sinusoidal features of (cx, cy, w, h).
Tensor2D box_sine_embedding(const std::vector<Box>& boxes, std::size_t dim);

// Updates the active queries in place; inactive rows are untouched.
void decoder_layer(QuerySet& queries, const Bottleneck& enhanced,
                   const DecoderLayerWeights& layer, const TextBank& text,
                   const DecoderWeights& weights);

struct DecodeTrace {
  std::vector<std::size_t> active_counts;  // entering each layer
  std::vector<double> thresholds;          // applied after layers 0 .. L-2
  std::vector<PruneEvent> events;
  std::size_t kept_by_floor = 0;
  std::size_t final_active = 0;
};

// Called after each layer that is followed by another layer.
using LayerHook = std::function<void(std::size_t layer, QuerySet& queries, DecodeTrace& trace)>;

struct DecodeResult {
  QuerySet queries;
  DecodeTrace trace;
};

DecodeResult decode(QuerySet queries, const Bottleneck& enhanced, const DecoderWeights& weights,
                    const TextBank& text, const LayerHook& hook);
DecodeResult decode(QuerySet queries, const Bottleneck& enhanced, const DecoderWeights& weights,
                    const TextBank& text, const std::optional<PruneSchedule>& pruner = std::nullopt);

// Hook applying the progressive threshold rule of `schedule`.
LayerHook schedule_hook(const PruneSchedule& schedule);

struct MaskSet {
  std::vector<std::size_t> queries;  // source query per mask
  std::vector<Tensor2D> logits;      // height x width each
  std::size_t height = 0;
  std::size_t width = 0;
  int stride = 4;
  double threshold = 0.0;

  std::size_t size() const { return logits.size(); }
  // Pixels with logit strictly above the threshold.
  std::size_t foreground(std::size_t mask) const;
};

MaskSet predict_masks(const QuerySet& queries, const FeatureMap& mask_map);

}  // namespace bseg
