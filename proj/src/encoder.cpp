#include "bseg/encoder.hpp"

#include <algorithm>
#include <cmath>
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

std::size_t ceil_half(std::size_t n) { return (n + 1) / 2; }

}  // namespace

std::array<GridSize, 5> pyramid_grid(std::size_t image_height, std::size_t image_width) {
  if (image_height == 0 || image_width == 0) throw ConfigError("pyramid_grid: empty image");
  std::array<GridSize, 5> grid;
  grid[0] = {(image_height + 3) / 4, (image_width + 3) / 4};
  for (std::size_t i = 1; i < grid.size(); ++i) {
    grid[i] = {ceil_half(grid[i - 1].height), ceil_half(grid[i - 1].width)};
  }
  return grid;
}

const FeatureMap& FeaturePyramid::at_stride(int stride) const {
  for (std::size_t i = 0; i < kPyramidStrides.size(); ++i) {
    if (kPyramidStrides[i] == stride) return levels[i];
  }
  throw ConfigError("pyramid has no level with stride " + std::to_string(stride));
}

void FeaturePyramid::validate() const {
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (levels[i].stride() != kPyramidStrides[i]) {
      throw ConfigError("pyramid level " + std::to_string(i + 2) + " has stride " +
                        std::to_string(levels[i].stride()));
    }
    if (levels[i].empty()) throw DimensionError("pyramid level is empty");
    if (i > 0 && (levels[i].height() != ceil_half(levels[i - 1].height()) ||
                  levels[i].width() != ceil_half(levels[i - 1].width()))) {
      throw DimensionError("pyramid level " + std::to_string(i + 2) +
                           " does not halve the previous grid");
    }
  }
}

FeatureMap Bottleneck::as_map() const {
  return FeatureMap::from_tokens(tokens, height, width, source_stride);
}

ReferencePoints Bottleneck::cell_centers() const {
  ReferencePoints refs;
  refs.reserve(height * width);
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      refs.push_back({(static_cast<double>(j) + 0.5) / static_cast<double>(width),
                      (static_cast<double>(i) + 0.5) / static_cast<double>(height)});
    }
  }
  return refs;
}

void TextBank::validate() const {
  if (spans.empty()) throw ConfigError("text bank: at least one category required");
  std::size_t expected = 0;
  for (const auto& [lo, hi] : spans) {
    if (lo != expected || hi <= lo) {
      throw ConfigError("text bank: category spans must tile the tokens contiguously");
    }
    expected = hi;
  }
  if (expected != tokens.rows()) throw ConfigError("text bank: spans do not cover every token");
  if (pooled.rows() != spans.size() || pooled.cols() != tokens.cols()) {
    throw DimensionError("text bank: pooled embeddings do not match categories");
  }
}

void TextBank::repool() {
  pooled = Tensor2D(spans.size(), tokens.cols());
  for (std::size_t c = 0; c < spans.size(); ++c) {
    const auto [lo, hi] = spans[c];
    for (std::size_t t = lo; t < hi; ++t) {
      for (std::size_t k = 0; k < tokens.cols(); ++k) pooled(c, k) += tokens(t, k);
    }
    for (std::size_t k = 0; k < tokens.cols(); ++k) pooled(c, k) /= static_cast<double>(hi - lo);
  }
}

EncoderWeights EncoderWeights::random(const EncoderShape& shape, Rng rng) {
  if (shape.blocks == 0) throw ConfigError("encoder needs at least one block");
  EncoderWeights w;
  w.dim = shape.dim;
  w.groups = default_group_count(shape.dim);
  for (std::size_t i = 0; i < 5; ++i) {
    w.input_proj[i] = random_linear(shape.backbone_channels[i], shape.dim,
                                    rng.fork("input_proj/" + std::to_string(i)));
  }
  const std::size_t d = shape.dim;
  for (std::size_t b = 0; b < shape.blocks; ++b) {
    Rng r = rng.fork("block/" + std::to_string(b));
    w.blocks.push_back(EncoderBlockWeights{
        BiAttentionParams::random(d, shape.heads, r.fork("fusion")),
        DeformParams::random(d, shape.heads, 1, shape.points, r.fork("self_attn")),
        DeformParams::random(d, shape.heads, 4, shape.points, r.fork("multi_scale")),
        random_linear(d, shape.ffn_dim, r.fork("ffn_in")),
        random_linear(shape.ffn_dim, d, r.fork("ffn_out")),
        NormAffine::identity(d), NormAffine::identity(d), NormAffine::identity(d),
        NormAffine::identity(d), NormAffine::identity(d)});
  }
  return w;
}

Tensor2D sine_position_embedding(std::size_t height, std::size_t width, std::size_t dim) {
  if (dim % 4 != 0) throw ConfigError("positional embedding width must be divisible by 4");
  const std::size_t half = dim / 2;
  Tensor2D pos(height * width, dim);
  auto encode_axis = [half](double u, std::span<double> out) {
    const double angle = u * 2.0 * std::numbers::pi;
    for (std::size_t k = 0; k < half / 2; ++k) {
      const double freq = std::pow(10000.0, 2.0 * static_cast<double>(k) / static_cast<double>(half));
      out[2 * k] = std::sin(angle / freq);
      out[2 * k + 1] = std::cos(angle / freq);
    }
  };
  for (std::size_t i = 0; i < height; ++i) {
    for (std::size_t j = 0; j < width; ++j) {
      auto row = pos.row(i * width + j);
      encode_axis((static_cast<double>(i) + 0.5) / static_cast<double>(height), row.subspan(0, half));
      encode_axis((static_cast<double>(j) + 0.5) / static_cast<double>(width), row.subspan(half, half));
    }
  }
  return pos;
}

FeaturePyramid project_pyramid(const FeaturePyramid& raw, const EncoderWeights& weights) {
  raw.validate();
  FeaturePyramid out;
  for (std::size_t i = 0; i < 5; ++i) {
    const FeatureMap& m = raw.levels[i];
    if (m.channels() != weights.input_proj[i].in_dim()) {
      throw DimensionError("input projection for S" + std::to_string(i + 2) + " expects " +
                           std::to_string(weights.input_proj[i].in_dim()) + " channels, map has " +
                           std::to_string(m.channels()));
    }
    out.levels[i] = FeatureMap::from_tokens(linear(m.as_tokens(), weights.input_proj[i]),
                                            m.height(), m.width(), m.stride());
  }
  return out;
}

Bottleneck select_bottleneck(const FeaturePyramid& pyramid, int stride) {
  if (stride != 8 && stride != 16 && stride != 32) {
    throw ConfigError("bottleneck stride must be 8, 16 or 32, got " + std::to_string(stride));
  }
  const FeatureMap& m = pyramid.at_stride(stride);
  return Bottleneck{m.as_tokens(), sine_position_embedding(m.height(), m.width(), m.channels()),
                    m.height(), m.width(), stride};
}

EncoderState encoder_block(const Bottleneck& bottleneck, const TextBank& text,
                           std::span<const FeatureMap> multi_scale,
                           const EncoderBlockWeights& block, std::size_t groups, double eps) {
  const std::size_t d = block.fusion.dim;
  if (bottleneck.tokens.cols() != d || text.tokens.cols() != d) {
    throw DimensionError("encoder block: stream width does not match block width " +
                         std::to_string(d));
  }
  if (bottleneck.pos.rows() != bottleneck.size() || bottleneck.pos.cols() != d) {
    throw DimensionError("encoder block: positional embedding shape mismatch");
  }
  if (bottleneck.size() != bottleneck.height * bottleneck.width) {
    throw DimensionError("encoder block: token count does not match bottleneck grid");
  }
  if (multi_scale.size() != block.multi_scale.levels) {
    throw DimensionError("encoder block: expected " + std::to_string(block.multi_scale.levels) +
                         " multi-scale maps");
  }
  const Tensor2D& pos = bottleneck.pos;
  const ReferencePoints centers = bottleneck.cell_centers();

  // Image and text streams both read the block input.
  const BiAttentionResult fused =
      bi_attention(add(bottleneck.tokens, pos), bottleneck.tokens, text.tokens, block.fusion);
  const Tensor2D image_fused =
      group_norm(add(bottleneck.tokens, fused.image_update), groups, eps, block.norm_image_fusion);
  TextBank text_out = text;
  text_out.tokens =
      group_norm(add(text.tokens, fused.text_update), groups, eps, block.norm_text_fusion);
  text_out.repool();

  const FeatureMap self_map =
      FeatureMap::from_tokens(image_fused, bottleneck.height, bottleneck.width, bottleneck.source_stride);
  const Tensor2D intra = group_norm(
      add(image_fused,
          deform_attention(add(image_fused, pos), centers, std::span(&self_map, 1), block.self_attn)),
      groups, eps, block.norm_self);

  const Tensor2D multi = group_norm(
      add(intra, deform_attention(add(intra, pos), centers, multi_scale, block.multi_scale)),
      groups, eps, block.norm_multi);

  const Tensor2D ffn = linear(relu(linear(multi, block.ffn_in)), block.ffn_out);
  Bottleneck out = bottleneck;
  out.tokens = group_norm(add(multi, ffn), groups, eps, block.norm_ffn);
  return {std::move(out), std::move(text_out)};
}

EncoderState encode(const Bottleneck& bottleneck, const TextBank& text,
                    const FeaturePyramid& pyramid, const EncoderWeights& weights) {
  if (weights.blocks.empty()) throw ConfigError("encode: at least one block required");
  text.validate();
  EncoderState state{bottleneck, text};
  for (const EncoderBlockWeights& block : weights.blocks) {
    state = encoder_block(state.bottleneck, state.text, pyramid.deform_levels(), block,
                          weights.groups, weights.eps);
  }
  return state;
}

FeatureMap build_mask_embedding(const Bottleneck& enhanced, const FeatureMap& s2) {
  if (enhanced.tokens.cols() != s2.channels()) {
    throw ConfigError("mask embedding: bottleneck width " + std::to_string(enhanced.tokens.cols()) +
                      " != S2 width " + std::to_string(s2.channels()));
  }
  FeatureMap out = resize_bilinear(enhanced.as_map(), s2.height(), s2.width(), s2.stride());
  for (std::size_t i = 0; i < out.data().size(); ++i) out.data()[i] += s2.data()[i];
  return out;
}

}  // namespace bseg
