#include "bseg/attention.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "bseg/errors.hpp"

namespace bseg {

namespace {

void check_heads(std::size_t dim, std::size_t heads, const char* who) {
  if (heads == 0 || dim == 0 || dim % heads != 0) {
    throw ConfigError(std::string(who) + ": model width " + std::to_string(dim) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
}

void check_linear(const Linear& l, std::size_t in, std::size_t out, const char* who) {
  if (l.weight.rows() != in || l.weight.cols() != out || l.bias.size() != out) {
    throw DimensionError(std::string(who) + ": expected a " + std::to_string(in) + "->" +
                         std::to_string(out) + " projection");
  }
}

void check_width(const Tensor2D& t, std::size_t dim, const char* who) {
  if (t.cols() != dim) {
    throw DimensionError(std::string(who) + ": tokens have width " + std::to_string(t.cols()) +
                         ", model width is " + std::to_string(dim));
  }
}

}  // namespace

Linear random_linear(std::size_t in, std::size_t out, Rng rng, double gain) {
  Linear l{Tensor2D(in, out), std::vector<double>(out, 0.0)};
  const double bound = gain * std::sqrt(6.0 / static_cast<double>(in + out));
  for (double& w : l.weight.data()) w = rng.uniform(-bound, bound);
  return l;
}

Linear zero_linear(std::size_t in, std::size_t out) {
  return Linear{Tensor2D(in, out), std::vector<double>(out, 0.0)};
}

void AttentionParams::validate() const {
  check_heads(dim, heads, "attention");
  check_linear(query, dim, dim, "attention query");
  check_linear(key, dim, dim, "attention key");
  check_linear(value, dim, dim, "attention value");
  check_linear(output, dim, dim, "attention output");
}

AttentionParams AttentionParams::random(std::size_t dim, std::size_t heads, Rng rng) {
  check_heads(dim, heads, "attention");
  return {dim,
          heads,
          random_linear(dim, dim, rng.fork("query")),
          random_linear(dim, dim, rng.fork("key")),
          random_linear(dim, dim, rng.fork("value")),
          random_linear(dim, dim, rng.fork("output"))};
}

void BiAttentionParams::validate() const {
  check_heads(dim, heads, "bi-attention");
  check_linear(image_query, dim, dim, "bi-attention image query");
  check_linear(text_key, dim, dim, "bi-attention text key");
  check_linear(image_value, dim, dim, "bi-attention image value");
  check_linear(text_value, dim, dim, "bi-attention text value");
  check_linear(image_output, dim, dim, "bi-attention image output");
  check_linear(text_output, dim, dim, "bi-attention text output");
}

BiAttentionParams BiAttentionParams::random(std::size_t dim, std::size_t heads, Rng rng) {
  check_heads(dim, heads, "bi-attention");
  return {dim,
          heads,
          random_linear(dim, dim, rng.fork("image_query")),
          random_linear(dim, dim, rng.fork("text_key")),
          random_linear(dim, dim, rng.fork("image_value")),
          random_linear(dim, dim, rng.fork("text_value")),
          random_linear(dim, dim, rng.fork("image_output")),
          random_linear(dim, dim, rng.fork("text_output"))};
}

void DeformParams::validate() const {
  check_heads(dim, heads, "deformable attention");
  if (levels == 0 || points == 0) {
    throw ConfigError("deformable attention: levels and points must be >= 1");
  }
  check_linear(offset, dim, heads * levels * points * 2, "deformable offset");
  check_linear(weight, dim, heads * levels * points, "deformable weight");
  check_linear(value, dim, dim, "deformable value");
  check_linear(output, dim, dim, "deformable output");
}

DeformParams DeformParams::random(std::size_t dim, std::size_t heads, std::size_t levels,
                                  std::size_t points, Rng rng) {
  check_heads(dim, heads, "deformable attention");
  if (levels == 0 || points == 0) {
    throw ConfigError("deformable attention: levels and points must be >= 1");
  }
  DeformParams p{dim,
                 heads,
                 levels,
                 points,
                 random_linear(dim, heads * levels * points * 2, rng.fork("offset"), 0.1),
                 random_linear(dim, heads * levels * points, rng.fork("weight")),
                 random_linear(dim, dim, rng.fork("value")),
                 random_linear(dim, dim, rng.fork("output"))};
  // Offset bias fans each head out along its own direction, one ring per point.
  for (std::size_t h = 0; h < heads; ++h) {
    const double theta = 2.0 * std::numbers::pi * static_cast<double>(h) / static_cast<double>(heads);
    double gx = std::cos(theta);
    double gy = std::sin(theta);
    const double norm = std::max(std::abs(gx), std::abs(gy));
    gx /= norm;
    gy /= norm;
    for (std::size_t l = 0; l < levels; ++l) {
      for (std::size_t k = 0; k < points; ++k) {
        const std::size_t slot = (h * levels + l) * points + k;
        p.offset.bias[2 * slot] = gx * static_cast<double>(k + 1);
        p.offset.bias[2 * slot + 1] = gy * static_cast<double>(k + 1);
      }
    }
  }
  return p;
}

Tensor2D multi_head_attention(const Tensor2D& query_in, const Tensor2D& key_in,
                              const Tensor2D& value_in, const AttentionParams& params) {
  params.validate();
  check_width(query_in, params.dim, "attention queries");
  check_width(key_in, params.dim, "attention keys");
  check_width(value_in, params.dim, "attention values");
  if (key_in.rows() == 0) throw DimensionError("attention: empty context");
  if (key_in.rows() != value_in.rows()) {
    throw DimensionError("attention: key and value token counts differ");
  }
  const Tensor2D q = linear(query_in, params.query);
  const Tensor2D k = linear(key_in, params.key);
  const Tensor2D v = linear(value_in, params.value);
  const std::size_t n = q.rows();
  const std::size_t m = k.rows();
  const std::size_t hd = params.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));
  Tensor2D mixed(n, params.dim);

#pragma omp parallel for schedule(static) if (n * m * params.dim >= (1u << 15))
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    std::vector<double> scores(m);
    auto qi = q.row(i);
    auto oi = mixed.row(i);
    for (std::size_t h = 0; h < params.heads; ++h) {
      const std::size_t lo = h * hd;
      for (std::size_t j = 0; j < m; ++j) {
        auto kj = k.row(j);
        double s = 0.0;
        for (std::size_t c = lo; c < lo + hd; ++c) s += qi[c] * kj[c];
        scores[j] = s * scale;
      }
      softmax_inplace(scores);
      for (std::size_t j = 0; j < m; ++j) {
        auto vj = v.row(j);
        const double a = scores[j];
        for (std::size_t c = lo; c < lo + hd; ++c) oi[c] += a * vj[c];
      }
    }
  }
  return linear(mixed, params.output);
}

Tensor2D cross_attention(const Tensor2D& queries, const Tensor2D& context,
                         const AttentionParams& params) {
  return multi_head_attention(queries, context, context, params);
}

BiAttentionResult bi_attention(const Tensor2D& image_keys, const Tensor2D& image_values,
                               const Tensor2D& text, const BiAttentionParams& params) {
  params.validate();
  check_width(image_keys, params.dim, "bi-attention image");
  check_width(image_values, params.dim, "bi-attention image values");
  check_width(text, params.dim, "bi-attention text");
  if (image_keys.rows() == 0 || text.rows() == 0) {
    throw DimensionError("bi-attention: both streams need at least one token");
  }
  if (image_keys.rows() != image_values.rows()) {
    throw DimensionError("bi-attention: image key and value token counts differ");
  }
  const Tensor2D q = linear(image_keys, params.image_query);
  const Tensor2D k = linear(text, params.text_key);
  const Tensor2D vi = linear(image_values, params.image_value);
  const Tensor2D vt = linear(text, params.text_value);
  const std::size_t n = q.rows();
  const std::size_t t = k.rows();
  const std::size_t heads = params.heads;
  const std::size_t hd = params.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(hd));

  // logits[(i * t + j) * heads + h]
  std::vector<double> logits(n * t * heads);
  const bool parallel = n * t * params.dim >= (1u << 15);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    auto qi = q.row(i);
    for (std::size_t j = 0; j < t; ++j) {
      auto kj = k.row(j);
      for (std::size_t h = 0; h < heads; ++h) {
        double s = 0.0;
        for (std::size_t c = h * hd; c < (h + 1) * hd; ++c) s += qi[c] * kj[c];
        logits[(i * t + j) * heads + h] = s * scale;
      }
    }
  }

  Tensor2D image_mixed(n, params.dim);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    std::vector<double> row(t);
    auto oi = image_mixed.row(i);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t j = 0; j < t; ++j) row[j] = logits[(i * t + j) * heads + h];
      softmax_inplace(row);
      for (std::size_t j = 0; j < t; ++j) {
        auto vj = vt.row(j);
        for (std::size_t c = h * hd; c < (h + 1) * hd; ++c) oi[c] += row[j] * vj[c];
      }
    }
  }

  Tensor2D text_mixed(t, params.dim);
#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(t); ++j) {
    std::vector<double> col(n);
    auto oj = text_mixed.row(j);
    for (std::size_t h = 0; h < heads; ++h) {
      for (std::size_t i = 0; i < n; ++i) col[i] = logits[(i * t + j) * heads + h];
      softmax_inplace(col);
      for (std::size_t i = 0; i < n; ++i) {
        auto vrow = vi.row(i);
        for (std::size_t c = h * hd; c < (h + 1) * hd; ++c) oj[c] += col[i] * vrow[c];
      }
    }
  }

  return {linear(image_mixed, params.image_output), linear(text_mixed, params.text_output)};
}

Tensor2D deform_attention(const Tensor2D& queries, const ReferencePoints& refs,
                          std::span<const FeatureMap> value_maps, const DeformParams& params) {
  params.validate();
  check_width(queries, params.dim, "deformable queries");
  if (refs.size() != queries.rows()) {
    throw DimensionError("deformable attention: " + std::to_string(refs.size()) +
                         " reference points for " + std::to_string(queries.rows()) + " queries");
  }
  if (value_maps.size() != params.levels) {
    throw DimensionError("deformable attention: " + std::to_string(value_maps.size()) +
                         " value maps for " + std::to_string(params.levels) + " levels");
  }
  std::vector<FeatureMap> projected;
  projected.reserve(value_maps.size());
  for (const FeatureMap& m : value_maps) {
    if (m.channels() != params.dim) {
      throw DimensionError("deformable attention: value map width " +
                           std::to_string(m.channels()) + " != model width " +
                           std::to_string(params.dim));
    }
    projected.push_back(
        FeatureMap::from_tokens(linear(m.as_tokens(), params.value), m.height(), m.width(), m.stride()));
  }
  const Tensor2D offsets = linear(queries, params.offset);
  const Tensor2D logits = linear(queries, params.weight);
  const std::size_t n = queries.rows();
  const std::size_t hd = params.head_dim();
  const std::size_t slots = params.slots();
  Tensor2D mixed(n, params.dim);

#pragma omp parallel for schedule(static) if (n * params.heads * slots * hd >= (1u << 14))
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
    std::vector<double> attn(slots);
    auto off = offsets.row(i);
    auto lg = logits.row(i);
    auto out = mixed.row(i);
    const Point2 ref = refs[i];
    for (std::size_t h = 0; h < params.heads; ++h) {
      for (std::size_t s = 0; s < slots; ++s) attn[s] = lg[h * slots + s];
      softmax_inplace(attn);
      auto head_out = out.subspan(h * hd, hd);
      for (std::size_t l = 0; l < params.levels; ++l) {
        const FeatureMap& vm = projected[l];
        const double inv_w = 1.0 / static_cast<double>(vm.width());
        const double inv_h = 1.0 / static_cast<double>(vm.height());
        for (std::size_t p = 0; p < params.points; ++p) {
          const std::size_t slot = l * params.points + p;
          const std::size_t o = 2 * (h * slots + slot);
          const double x = ref.x + off[o] * inv_w;
          const double y = ref.y + off[o + 1] * inv_h;
          bilinear_accumulate(vm, x, y, h * hd, attn[slot], head_out);
        }
      }
    }
  }
  return linear(mixed, params.output);
}

}  // namespace bseg
