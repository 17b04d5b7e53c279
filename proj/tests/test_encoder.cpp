#include <doctest.h>

#include <cmath>

#include "bseg/config.hpp"
#include "bseg/encoder.hpp"
#include "bseg/errors.hpp"
#include "bseg/harness.hpp"
#include "bseg/scene.hpp"
#include "helpers.hpp"

using namespace bseg;
using testing::checksum;
using testing::close_rel;
using testing::max_abs_diff;

namespace {

constexpr double kGoldenBlock = -333.37069645834737;
constexpr double kGoldenEncode3 = -280.24666054156933;

struct Instance {
  RunConfig cfg;
  Model model;
  FeaturePyramid pyramid;
  Bottleneck bottleneck;
  TextBank text;
};

Instance desk_instance(std::size_t blocks) {
  Instance in;
  in.cfg = preset_config(Preset::desk_test);
  in.cfg.model.encoder_blocks = blocks;
  in.model = Model::random(in.cfg);
  SyntheticScene scene = gen_scene(42, in.cfg.scene_spec());
  in.pyramid = project_pyramid(scene.pyramid, in.model.encoder);
  in.bottleneck = select_bottleneck(in.pyramid, in.cfg.model.bottleneck_stride);
  in.text = scene.text;
  return in;
}

Tensor2D norm_chain(Tensor2D x, std::size_t times, std::size_t groups, double eps) {
  const auto id = NormAffine::identity(x.cols());
  for (std::size_t i = 0; i < times; ++i) x = group_norm(x, groups, eps, id);
  return x;
}

}  // namespace

TEST_SUITE("encoder") {

TEST_CASE("pyramid grid arithmetic") {
  auto g32 = pyramid_grid(32, 32);
  CHECK(g32[2].height == 2);
  CHECK(g32[2].cells() == 4);
  auto g800 = pyramid_grid(800, 800);
  CHECK(g800[0].height == 200);
  CHECK(g800[2].cells() == 2500);
  CHECK(g800[1].cells() == 4 * g800[2].cells());
  CHECK(g800[4].height == 13);
  auto odd = pyramid_grid(100, 60);
  CHECK(odd[0].height == 25);
  CHECK(odd[0].width == 15);
  CHECK(odd[1].width == 8);
}

TEST_CASE("bottleneck selection") {
  Instance in = desk_instance(1);
  Bottleneck b16 = select_bottleneck(in.pyramid, 16);
  Bottleneck b8 = select_bottleneck(in.pyramid, 8);
  CHECK(b16.size() == 64);
  CHECK(b16.height * b16.width == b16.size());
  CHECK(b8.size() == 4 * b16.size());
  CHECK(b16.pos.rows() == b16.size());
  CHECK(b16.tokens.row(9)[3] == in.pyramid.at_stride(16).at(1, 1, 3));
  CHECK_THROWS_AS(select_bottleneck(in.pyramid, 4), ConfigError);
  CHECK_THROWS_AS(select_bottleneck(in.pyramid, 12), ConfigError);
}

TEST_CASE("block keeps the token count and stays finite") {
  Instance in = desk_instance(1);
  EncoderState s = encoder_block(in.bottleneck, in.text, in.pyramid.deform_levels(),
                                 in.model.encoder.blocks[0], in.model.encoder.groups,
                                 in.model.encoder.eps);
  CHECK(s.bottleneck.size() == in.bottleneck.size());
  CHECK(s.text.tokens.rows() == in.text.tokens.rows());
  CHECK(s.bottleneck.tokens.all_finite());
}

TEST_CASE("zeroed output projections reduce a block to group norms") {
  Instance in = desk_instance(2);
  EncoderWeights w = in.model.encoder;
  const std::size_t d = w.dim;
  for (auto& b : w.blocks) {
    b.fusion.image_output = zero_linear(d, d);
    b.fusion.text_output = zero_linear(d, d);
    b.self_attn.output = zero_linear(d, d);
    b.multi_scale.output = zero_linear(d, d);
    b.ffn_out = zero_linear(b.ffn_out.in_dim(), d);
  }
  EncoderState s = encode(in.bottleneck, in.text, in.pyramid, w);
  CHECK(max_abs_diff(s.bottleneck.tokens, norm_chain(in.bottleneck.tokens, 8, w.groups, w.eps)) < 1e-12);
  CHECK(max_abs_diff(s.text.tokens, norm_chain(in.text.tokens, 2, w.groups, w.eps)) < 1e-12);
}

TEST_CASE("one-block encode equals one block call") {
  Instance in = desk_instance(1);
  const auto& w = in.model.encoder;
  EncoderState a = encode(in.bottleneck, in.text, in.pyramid, w);
  EncoderState b = encoder_block(in.bottleneck, in.text, in.pyramid.deform_levels(), w.blocks[0],
                                 w.groups, w.eps);
  CHECK(a.bottleneck.tokens == b.bottleneck.tokens);
  CHECK(a.text.tokens == b.text.tokens);
}

TEST_CASE("encode preserves shape for 1, 3 and 6 blocks") {
  for (std::size_t m : {1u, 3u, 6u}) {
    Instance in = desk_instance(m);
    EncoderState s = encode(in.bottleneck, in.text, in.pyramid, in.model.encoder);
    CHECK(s.bottleneck.tokens.rows() == in.bottleneck.size());
    CHECK(s.bottleneck.tokens.cols() == in.cfg.model.dim);
    CHECK(s.bottleneck.height == in.bottleneck.height);
  }
}

TEST_CASE("block golden at seed 42") {
  Instance in = desk_instance(1);
  const auto& w = in.model.encoder;
  EncoderState s = encoder_block(in.bottleneck, in.text, in.pyramid.deform_levels(), w.blocks[0],
                                 w.groups, w.eps);
  const double got = checksum(s.bottleneck.tokens.data());
  
  CHECK_MESSAGE(close_rel(got, kGoldenBlock), "checksum " << testing::exact(got));
}

TEST_CASE("three-block encode golden at seed 42") {
  Instance in = desk_instance(3);
  EncoderState s = encode(in.bottleneck, in.text, in.pyramid, in.model.encoder);
  const double got = checksum(s.bottleneck.tokens.data()) + checksum(s.text.tokens.data());
  
  CHECK_MESSAGE(close_rel(got, kGoldenEncode3), "checksum " << testing::exact(got));
}

TEST_CASE("mask embedding") {
  Instance in = desk_instance(1);
  const FeatureMap& s2 = in.pyramid.s2();

  Bottleneck zero = in.bottleneck;
  for (double& v : zero.tokens.data()) v = 0.0;
  CHECK(build_mask_embedding(zero, s2) == s2);

  FeatureMap empty(s2.height(), s2.width(), s2.channels(), s2.stride());
  FeatureMap up = build_mask_embedding(in.bottleneck, empty);
  CHECK(up == resize_bilinear(in.bottleneck.as_map(), s2.height(), s2.width(), 4));

  Bottleneck flat = in.bottleneck;
  for (std::size_t r = 0; r < flat.size(); ++r)
    for (std::size_t c = 0; c < flat.tokens.cols(); ++c) flat.tokens(r, c) = 0.1 * c - 3.0;
  FeatureMap m = build_mask_embedding(flat, empty);
  for (std::size_t y = 0; y < m.height(); ++y)
    for (std::size_t x = 0; x < m.width(); ++x)
      for (std::size_t c = 0; c < m.channels(); ++c) CHECK(std::fabs(m.at(y, x, c) - (0.1 * c - 3.0)) < 1e-12);

  FeatureMap narrow(s2.height(), s2.width(), 8, 4);
  CHECK_THROWS_AS(build_mask_embedding(in.bottleneck, narrow), ConfigError);
}

TEST_CASE("text bank pooling") {
  TextBank t;
  t.tokens = Tensor2D(3, 2, std::vector<double>{1, 0, 3, 2, 5, 5});
  t.spans = {{0, 2}, {2, 3}};
  t.repool();
  CHECK(t.pooled(0, 0) == 2.0);
  CHECK(t.pooled(0, 1) == 1.0);
  CHECK(t.pooled(1, 0) == 5.0);
  t.spans = {{0, 1}, {2, 3}};
  CHECK_THROWS(t.validate());
}

}
