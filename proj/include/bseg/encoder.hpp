#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "bseg/attention.hpp"
#include "bseg/rng.hpp"
#include "bseg/tensor.hpp"

namespace bseg {

inline constexpr std::array<int, 5> kPyramidStrides = {4, 8, 16, 32, 64};

struct GridSize {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t cells() const { return height * width; }
};

// Grid of every pyramid level for an input image: S2 is ceil(image/4) and each
// further level halves the previous one, rounding up.
std::array<GridSize, 5> pyramid_grid(std::size_t image_height, std::size_t image_width);

// Five maps S2..S6 at strides 4..64.
struct FeaturePyramid {
  std::array<FeatureMap, 5> levels;

  const FeatureMap& s2() const { return levels[0]; }
  const FeatureMap& at_stride(int stride) const;
  // S3..S6, the maps the multi-scale cross-attention reads.
  std::span<const FeatureMap> deform_levels() const { return {levels.data() + 1, 4}; }
  void validate() const;
};

struct Bottleneck {
  Tensor2D tokens;  // |B| x d, row-major over the source grid
  Tensor2D pos;     // |B| x d sinusoidal embedding of each cell center
  std::size_t height = 0;
  std::size_t width = 0;
  int source_stride = 16;

  std::size_t size() const { return tokens.rows(); }
  FeatureMap as_map() const;
  ReferencePoints cell_centers() const;
};

// Token-level text embeddings and their category-pooled means. spans[c] is the
// half-open token range pooled into category c.
struct TextBank {
  Tensor2D tokens;
  Tensor2D pooled;
  std::vector<std::pair<std::size_t, std::size_t>> spans;

  std::size_t categories() const { return spans.size(); }
  void validate() const;
  // Recomputes pooled from tokens.
  void repool();
};

struct EncoderBlockWeights {
  BiAttentionParams fusion;
  DeformParams self_attn;    // one level: the bottleneck itself
  DeformParams multi_scale;  // four levels: S3..S6
  Linear ffn_in, ffn_out;
  NormAffine norm_image_fusion, norm_text_fusion, norm_self, norm_multi, norm_ffn;
};

struct EncoderShape {
  std::size_t dim = 256;
  std::size_t heads = 8;
  std::size_t ffn_dim = 2048;
  std::size_t points = 4;
  std::size_t blocks = 6;
  std::array<std::size_t, 5> backbone_channels = {256, 512, 1024, 2048, 2048};
};

struct EncoderWeights {
  std::size_t dim = 0;
  std::size_t groups = 1;
  double eps = kNormEps;
  std::array<Linear, 5> input_proj;
  std::vector<EncoderBlockWeights> blocks;

  static EncoderWeights random(const EncoderShape& shape, Rng rng);
};

// Sinusoidal 2D embedding: first half of the channels encodes y, second half x,
// each as interleaved sin/cos pairs over geometric frequencies.
Tensor2D sine_position_embedding(std::size_t height, std::size_t width, std::size_t dim);

// Per-level 1x1 projection of raw backbone maps to the model width.
FeaturePyramid project_pyramid(const FeaturePyramid& raw, const EncoderWeights& weights);

Bottleneck select_bottleneck(const FeaturePyramid& pyramid, int stride = 16);

struct EncoderState {
  Bottleneck bottleneck;
  TextBank text;
};

// One fusion block: bidirectional image/text attention, deformable self
// attention on the bottleneck grid, deformable cross attention into S3..S6 and
// an FFN, each followed by a residual add and group norm. S2 is not an input.
EncoderState encoder_block(const Bottleneck& bottleneck, const TextBank& text,
                           std::span<const FeatureMap> multi_scale,
                           const EncoderBlockWeights& block, std::size_t groups, double eps);

EncoderState encode(const Bottleneck& bottleneck, const TextBank& text,
                    const FeaturePyramid& pyramid, const EncoderWeights& weights);

// Upsamples the enhanced bottleneck to S2's grid and adds S2.
FeatureMap build_mask_embedding(const Bottleneck& enhanced, const FeatureMap& s2);

}  // namespace bseg
