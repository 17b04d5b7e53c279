#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "bseg/rng.hpp"
#include "bseg/tensor.hpp"

namespace bseg {

// Standard multi-head attention projections. All four maps are d x d.
struct AttentionParams {
  std::size_t dim = 0;
  std::size_t heads = 0;
  Linear query, key, value, output;

  std::size_t head_dim() const { return dim / heads; }
  void validate() const;

  static AttentionParams random(std::size_t dim, std::size_t heads, Rng rng);
};

// Bidirectional image/text fusion attention. Both directions share one
// similarity matrix (image queries against text keys), image-to-text rows are
// normalized over text tokens and text-to-image columns over image tokens.
struct BiAttentionParams {
  std::size_t dim = 0;
  std::size_t heads = 0;
  Linear image_query, text_key;
  Linear image_value, text_value;
  Linear image_output, text_output;

  std::size_t head_dim() const { return dim / heads; }
  void validate() const;

  static BiAttentionParams random(std::size_t dim, std::size_t heads, Rng rng);
};

// Deformable attention over `levels` value maps with `points` samples per
// head per level. Offsets are predicted in cells of each level's grid.
struct DeformParams {
  std::size_t dim = 0;
  std::size_t heads = 0;
  std::size_t levels = 0;
  std::size_t points = 0;
  Linear offset;   // d -> heads*levels*points*2, layout [(h*levels + l)*points + p][x,y]
  Linear weight;   // d -> heads*levels*points, softmax per head
  Linear value;    // d -> d, applied to every value-map cell
  Linear output;   // d -> d

  std::size_t head_dim() const { return dim / heads; }
  std::size_t slots() const { return levels * points; }
  void validate() const;

  static DeformParams random(std::size_t dim, std::size_t heads, std::size_t levels,
                             std::size_t points, Rng rng);
};

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// One normalized (x, y) anchor per query; shared across levels.
using ReferencePoints = std::vector<Point2>;

// Attention with separate query/key/value inputs (key_in and value_in share rows).
Tensor2D multi_head_attention(const Tensor2D& query_in, const Tensor2D& key_in,
                              const Tensor2D& value_in, const AttentionParams& params);

// Queries attend to a context; the context supplies keys and values.
Tensor2D cross_attention(const Tensor2D& queries, const Tensor2D& context,
                         const AttentionParams& params);

struct BiAttentionResult {
  Tensor2D image_update;  // |image| x d
  Tensor2D text_update;   // |text| x d
};

// image_keys and image_values are both |image| x d: positional information is
// carried by image_keys only.
BiAttentionResult bi_attention(const Tensor2D& image_keys, const Tensor2D& image_values,
                               const Tensor2D& text, const BiAttentionParams& params);

Tensor2D deform_attention(const Tensor2D& queries, const ReferencePoints& refs,
                          std::span<const FeatureMap> value_maps, const DeformParams& params);

// Xavier-uniform initialization for an in x out map with zero bias.
Linear random_linear(std::size_t in, std::size_t out, Rng rng, double gain = 1.0);
Linear zero_linear(std::size_t in, std::size_t out);

}  // namespace bseg
