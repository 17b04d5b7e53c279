#include "bseg/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "bseg/errors.hpp"

namespace bseg {

namespace {

Tensor2D add(const Tensor2D& a, const Tensor2D& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError("residual add: shape mismatch");
  }
  Tensor2D out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] += b.data()[i];
  return out;
}

Tensor2D relu(Tensor2D t) {
  for (double& v : t.data()) v = v > 0.0 ? v : 0.0;
  return t;
}

Tensor2D gather_rows(const Tensor2D& t, const std::vector<std::size_t>& rows) {
  Tensor2D out(rows.size(), t.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    std::copy(t.row(rows[k]).begin(), t.row(rows[k]).end(), out.row(k).begin());
  }
  return out;
}

// Sigmoid each coordinate, then clip the extent to the image.
Box squash_box(std::span<const double> raw) {
  const Box b{sigmoid(raw[0]), sigmoid(raw[1]), sigmoid(raw[2]), sigmoid(raw[3])};
  return Box::from_corners(std::max(b.x0(), 0.0), std::max(b.y0(), 0.0), std::min(b.x1(), 1.0),
                           std::min(b.y1(), 1.0));
}

}  // namespace

Tensor2D Mlp::forward(const Tensor2D& input) const {
  if (layers.empty()) throw ConfigError("mlp has no layers");
  Tensor2D x = input;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    x = linear(x, layers[i]);
    if (i + 1 < layers.size()) x = relu(std::move(x));
  }
  return x;
}

Mlp Mlp::random(const std::vector<std::size_t>& dims, Rng rng, double last_gain) {
  if (dims.size() < 2) throw ConfigError("mlp needs an input and an output width");
  Mlp m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    m.layers.push_back(random_linear(dims[i], dims[i + 1], rng.fork("layer/" + std::to_string(i)),
                                     last ? last_gain : 1.0));
  }
  return m;
}

DecoderWeights DecoderWeights::random(const DecoderShape& shape, Rng rng) {
  if (shape.layers == 0) throw ConfigError("decoder needs at least one layer");
  const std::size_t d = shape.dim;
  DecoderWeights w;
  w.dim = d;
  w.groups = default_group_count(d);
  w.log_scale = shape.log_scale;
  w.logit_bias = shape.logit_bias;
  w.select_box = Mlp::random({d, d, d, 4}, rng.fork("select_box"), 0.1);
  // Every layer starts from the same class projection, the shared-head setup
  // of DETR-style decoders, so confidences are comparable across layers.
  const Linear class_proj = random_linear(d, d, rng.fork("class_proj"));
  for (std::size_t l = 0; l < shape.layers; ++l) {
    Rng r = rng.fork("layer/" + std::to_string(l));
    w.layers.push_back(DecoderLayerWeights{
        Mlp::random({2 * d, d, d}, r.fork("query_pos")),
        AttentionParams::random(d, shape.heads, r.fork("self_attn")),
        DeformParams::random(d, shape.heads, 1, shape.points, r.fork("cross_attn")),
        random_linear(d, shape.ffn_dim, r.fork("ffn_in")),
        random_linear(shape.ffn_dim, d, r.fork("ffn_out")),
        Mlp::random({d, d, d, 4}, r.fork("box_head"), 0.1),
        class_proj,
        NormAffine::identity(d), NormAffine::identity(d), NormAffine::identity(d)});
  }
  return w;
}

double scaled_cosine(std::span<const double> q, std::span<const double> z, double s) {
  if (q.size() != z.size()) throw DimensionError("scaled_cosine: width mismatch");
  double dot = 0.0, nq = 0.0, nz = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    dot += q[i] * z[i];
    nq += q[i] * q[i];
    nz += z[i] * z[i];
  }
  if (!(nq > 0.0) || !(nz > 0.0)) throw NumericError("scaled_cosine: zero-norm embedding");
  const double c = std::clamp(dot / (std::sqrt(nq) * std::sqrt(nz)), -1.0, 1.0);
  return std::exp(s) * c;
}

double score_to_confidence(double score, double logit_bias) { return sigmoid(score + logit_bias); }

void score_queries(QuerySet& queries, const std::vector<std::size_t>& rows, const Tensor2D& embed,
                   const TextBank& text, double log_scale, double logit_bias) {
  const std::size_t C = text.pooled.rows();
  if (embed.rows() != rows.size() || embed.cols() != text.pooled.cols()) {
    throw DimensionError("score_queries: embedding shape mismatch");
  }
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const std::size_t i = rows[k];
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < C; ++j) {
      const double v = scaled_cosine(embed.row(k), text.pooled.row(j), log_scale);
      queries.class_scores(i, j) = v;
      best = std::max(best, v);
    }
    queries.scores[i] = best;
    queries.confidence[i] = score_to_confidence(best, logit_bias);
  }
}

QuerySet language_select(const Bottleneck& enhanced, const TextBank& text, std::size_t k,
                         const DecoderWeights& weights) {
  text.validate();
  const std::size_t n = enhanced.size();
  const std::size_t C = text.categories();
  if (k > n) {
    throw ConfigError("language_select: K = " + std::to_string(k) + " exceeds " +
                      std::to_string(n) + " bottleneck tokens");
  }
  if (enhanced.tokens.cols() != text.pooled.cols()) {
    throw DimensionError("language_select: bottleneck and text widths differ");
  }

  std::vector<double> sigma(n);
  for (std::size_t i = 0; i < n; ++i) {
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < C; ++j) {
      best = std::max(best, scaled_cosine(enhanced.tokens.row(i), text.pooled.row(j),
                                          weights.log_scale));
    }
    sigma[i] = best;
  }
  std::vector<std::size_t> all(n);
  for (std::size_t i = 0; i < n; ++i) all[i] = i;
  const std::vector<std::size_t> chosen = top_k_indices(sigma, all, k);

  QuerySet q;
  q.features = gather_rows(enhanced.tokens, chosen);
  q.class_scores = Tensor2D(k, C);
  q.scores.assign(k, 0.0);
  q.confidence.assign(k, 0.0);
  q.active.assign(k, true);
  q.origin = chosen;
  std::vector<std::size_t> rows(k);
  for (std::size_t i = 0; i < k; ++i) rows[i] = i;
  score_queries(q, rows, q.features, text, weights.log_scale, weights.logit_bias);

  // Boxes start from a two-cell anchor around the source cell.
  const ReferencePoints centers = enhanced.cell_centers();
  const double aw = std::min(2.0 / static_cast<double>(enhanced.width), 1.0 - 1e-3);
  const double ah = std::min(2.0 / static_cast<double>(enhanced.height), 1.0 - 1e-3);
  const Tensor2D raw = weights.select_box.forward(q.features);
  q.boxes.resize(k);
  for (std::size_t i = 0; i < k; ++i) {
    const Point2 c = centers[chosen[i]];
    const double anchor[4] = {inverse_sigmoid(c.x), inverse_sigmoid(c.y), inverse_sigmoid(aw),
                              inverse_sigmoid(ah)};
    double v[4];
    for (int t = 0; t < 4; ++t) v[t] = raw(i, t) + anchor[t];
    q.boxes[i] = squash_box(v);
  }
  return q;
}

Tensor2D box_sine_embedding(const std::vector<Box>& boxes, std::size_t dim) {
  if (dim % 4 != 0) throw ConfigError("box embedding width must be divisible by 4");
  const std::size_t per = dim / 2;
  Tensor2D out(boxes.size(), 4 * per);
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    const double coords[4] = {boxes[i].cx, boxes[i].cy, boxes[i].w, boxes[i].h};
    auto row = out.row(i);
    for (std::size_t c = 0; c < 4; ++c) {
      const double angle = coords[c] * 2.0 * std::numbers::pi;
      for (std::size_t k = 0; k < per / 2; ++k) {
        const double freq =
            std::pow(10000.0, 2.0 * static_cast<double>(k) / static_cast<double>(per));
        row[c * per + 2 * k] = std::sin(angle / freq);
        row[c * per + 2 * k + 1] = std::cos(angle / freq);
      }
    }
  }
  return out;
}

void decoder_layer(QuerySet& queries, const Bottleneck& enhanced,
                   const DecoderLayerWeights& layer, const TextBank& text,
                   const DecoderWeights& weights) {
  const std::vector<std::size_t> rows = queries.active_indices();
  if (rows.empty()) throw StateError("decoder_layer: no active queries");
  const std::size_t d = weights.dim;
  if (queries.features.cols() != d || enhanced.tokens.cols() != d) {
    throw DimensionError("decoder_layer: query or bottleneck width differs from decoder width");
  }
  const std::size_t groups = weights.groups;
  const double eps = weights.eps;

  // Pruned queries are compacted away, so they never enter attention.
  Tensor2D x = gather_rows(queries.features, rows);
  std::vector<Box> boxes;
  boxes.reserve(rows.size());
  for (std::size_t i : rows) boxes.push_back(queries.boxes[i]);

  const Tensor2D pos = layer.query_pos.forward(box_sine_embedding(boxes, d));
  const Tensor2D qk = add(x, pos);
  x = group_norm(add(x, multi_head_attention(qk, qk, x, layer.self_attn)), groups, eps,
                 layer.norm_self);

  ReferencePoints refs;
  refs.reserve(boxes.size());
  for (const Box& b : boxes) refs.push_back({b.cx, b.cy});
  const FeatureMap memory = enhanced.as_map();
  x = group_norm(
      add(x, deform_attention(add(x, pos), refs, std::span(&memory, 1), layer.cross_attn)),
      groups, eps, layer.norm_cross);

  x = group_norm(add(x, linear(relu(linear(x, layer.ffn_in)), layer.ffn_out)), groups, eps,
                 layer.norm_ffn);

  const Tensor2D delta = layer.box_head.forward(x);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const Box& b = boxes[k];
    const double v[4] = {inverse_sigmoid(b.cx) + delta(k, 0), inverse_sigmoid(b.cy) + delta(k, 1),
                         inverse_sigmoid(b.w) + delta(k, 2), inverse_sigmoid(b.h) + delta(k, 3)};
    queries.boxes[rows[k]] = squash_box(v);
    std::copy(x.row(k).begin(), x.row(k).end(), queries.features.row(rows[k]).begin());
  }
  score_queries(queries, rows, linear(x, layer.class_proj), text, weights.log_scale,
                weights.logit_bias);
}

DecodeResult decode(QuerySet queries, const Bottleneck& enhanced, const DecoderWeights& weights,
                    const TextBank& text, const LayerHook& hook) {
  if (weights.layers.empty()) throw ConfigError("decode: at least one layer required");
  DecodeTrace trace;
  const std::size_t L = weights.layers.size();
  for (std::size_t l = 0; l < L; ++l) {
    trace.active_counts.push_back(queries.active_count());
    decoder_layer(queries, enhanced, weights.layers[l], text, weights);
    if (hook && l + 1 < L) hook(l, queries, trace);
  }
  trace.final_active = queries.active_count();
  return {std::move(queries), std::move(trace)};
}

LayerHook schedule_hook(const PruneSchedule& schedule) {
  schedule.validate();
  return [schedule](std::size_t layer, QuerySet& queries, DecodeTrace& trace) {
    const double tau = threshold_at(schedule, layer);
    std::vector<double> before(queries.confidence);
    const PruneOutcome outcome = prune(queries, tau, schedule.min_keep);
    trace.thresholds.push_back(tau);
    trace.kept_by_floor += outcome.kept_by_floor;
    for (std::size_t i : outcome.removed) {
      trace.events.push_back({layer, i, before[i], tau});
    }
  };
}

DecodeResult decode(QuerySet queries, const Bottleneck& enhanced, const DecoderWeights& weights,
                    const TextBank& text, const std::optional<PruneSchedule>& pruner) {
  if (!pruner) return decode(std::move(queries), enhanced, weights, text, LayerHook{});
  if (pruner->layers != weights.layers.size()) {
    throw ConfigError("decode: schedule spans " + std::to_string(pruner->layers) +
                      " layers, decoder has " + std::to_string(weights.layers.size()));
  }
  return decode(std::move(queries), enhanced, weights, text, schedule_hook(*pruner));
}

std::size_t MaskSet::foreground(std::size_t mask) const {
  std::size_t n = 0;
  for (double v : logits.at(mask).data()) n += v > threshold ? 1 : 0;
  return n;
}

MaskSet predict_masks(const QuerySet& queries, const FeatureMap& mask_map) {
  if (queries.features.cols() != mask_map.channels()) {
    throw DimensionError("predict_masks: query width " + std::to_string(queries.features.cols()) +
                         " != mask map width " + std::to_string(mask_map.channels()));
  }
  MaskSet out;
  out.queries = queries.active_indices();
  out.height = mask_map.height();
  out.width = mask_map.width();
  out.stride = mask_map.stride();
  out.logits.assign(out.queries.size(), Tensor2D(out.height, out.width));
  const std::size_t c = mask_map.channels();
  const std::size_t pixels = out.height * out.width;
  const long total = static_cast<long>(out.queries.size() * out.height);
#pragma omp parallel for schedule(static) if (out.queries.size() * pixels * c >= (1u << 16))
  for (long job = 0; job < total; ++job) {
    const std::size_t m = static_cast<std::size_t>(job) / out.height;
    const std::size_t y = static_cast<std::size_t>(job) % out.height;
    auto q = queries.features.row(out.queries[m]);
    for (std::size_t x = 0; x < out.width; ++x) {
      auto cell = mask_map.cell(y, x);
      double dot = 0.0;
      for (std::size_t k = 0; k < c; ++k) dot += q[k] * cell[k];
      out.logits[m](y, x) = dot;
    }
  }
  return out;
}

}  // namespace bseg
