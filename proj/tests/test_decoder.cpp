#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bseg/config.hpp"
#include "bseg/decoder.hpp"
#include "bseg/errors.hpp"
#include "bseg/harness.hpp"
#include "bseg/reference.hpp"
#include "helpers.hpp"

using namespace bseg;
using testing::checksum;
using testing::close_rel;
using testing::random_tensor;

namespace {

constexpr double kGoldenLayer = 316.56779642017727;

struct Desk {
  RunConfig cfg;
  Model model;
  SyntheticScene scene;
  Prepared prep;
};

Desk desk(std::size_t image = 128, std::size_t queries = 0) {
  Desk d;
  d.cfg = preset_config(Preset::desk_test);
  d.cfg.image_height = d.cfg.image_width = image;
  if (queries) d.cfg.model.queries = queries;
  d.model = Model::random(d.cfg);
  d.scene = gen_scene(d.cfg.seed, d.cfg.scene_spec());
  d.prep = prepare(d.cfg, d.model, d.scene);
  return d;
}

DecoderWeights tiny_weights(std::size_t dim, double log_scale) {
  DecoderShape shape;
  shape.dim = dim;
  shape.heads = 1;
  shape.ffn_dim = 2 * dim;
  shape.points = 1;
  shape.layers = 1;
  shape.log_scale = log_scale;
  return DecoderWeights::random(shape, Rng(1, "tiny"));
}

Bottleneck grid_bottleneck(Tensor2D tokens, std::size_t h, std::size_t w) {
  Bottleneck b;
  b.pos = Tensor2D(tokens.rows(), tokens.cols());
  b.tokens = std::move(tokens);
  b.height = h;
  b.width = w;
  return b;
}

TextBank text_bank(Tensor2D tokens) {
  TextBank t;
  for (std::size_t i = 0; i < tokens.rows(); ++i) t.spans.push_back({i, i + 1});
  t.tokens = std::move(tokens);
  t.repool();
  return t;
}

}  // namespace

TEST_SUITE("decoder") {

TEST_CASE("scaled cosine examples") {
  std::vector<double> e0{1, 0, 0}, e1{0, 1, 0}, half{0.5, std::sqrt(0.75), 0};
  CHECK(scaled_cosine(e0, e0, 0.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(scaled_cosine(e0, e1, 3.0) == 0.0);
  CHECK(std::fabs(scaled_cosine(half, e0, std::log(2.0)) - 1.0) < 1e-12);
  std::vector<double> zero(3, 0.0);
  CHECK_THROWS_AS(scaled_cosine(zero, e0, 0.0), NumericError);
}

TEST_CASE("selection keeps the best scoring tokens") {
  const double c[4] = {0.9, 0.1, 0.5, 0.7};
  Tensor2D tokens(4, 4);
  for (std::size_t i = 0; i < 4; ++i) {
    tokens(i, 0) = c[i];
    tokens(i, 1) = std::sqrt(1.0 - c[i] * c[i]);
  }
  Tensor2D z(1, 4);
  z(0, 0) = 1.0;
  DecoderWeights w = tiny_weights(4, 0.0);
  QuerySet q = language_select(grid_bottleneck(tokens, 2, 2), text_bank(z), 2, w);
  REQUIRE(q.origin.size() == 2);
  CHECK(q.origin[0] == 0);
  CHECK(q.origin[1] == 3);
  CHECK(q.scores[0] == doctest::Approx(0.9));

  QuerySet all = language_select(grid_bottleneck(tokens, 2, 2), text_bank(z), 4, w);
  std::vector<std::size_t> sorted = all.origin;
  std::sort(sorted.begin(), sorted.end());
  CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3});
  CHECK_THROWS_AS(language_select(grid_bottleneck(tokens, 2, 2), text_bank(z), 5, w), ConfigError);
}

TEST_CASE("selection matches score-then-sort") {
  Rng rng(4, "select-oracle");
  DecoderWeights w = tiny_weights(6, 1.3);
  for (int t = 0; t < 20; ++t) {
    Tensor2D tokens = random_tensor(20, 6, rng), z = random_tensor(3, 6, rng);
    if (t % 4 == 0) std::copy(tokens.row(3).begin(), tokens.row(3).end(), tokens.row(7).begin());  // a tie
    QuerySet q = language_select(grid_bottleneck(tokens, 4, 5), text_bank(z), 8, w);

    std::vector<double> score(20);
    for (std::size_t i = 0; i < 20; ++i) {
      double best = -INFINITY;
      for (std::size_t j = 0; j < 3; ++j) {
        double dot = 0, nq = 0, nz = 0;
        for (std::size_t c = 0; c < 6; ++c) {
          dot += tokens(i, c) * z(j, c);
          nq += tokens(i, c) * tokens(i, c);
          nz += z(j, c) * z(j, c);
        }
        best = std::max(best, std::exp(1.3) * dot / std::sqrt(nq * nz));
      }
      score[i] = best;
    }
    std::vector<std::size_t> order(20);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
    order.resize(8);
    CHECK(q.origin == order);
  }
}

TEST_CASE("selection ignores the scale of the text embeddings") {
  Desk d = desk();
  const auto& enh = d.prep.enhanced;
  QuerySet base = language_select(enh.bottleneck, enh.text, d.cfg.model.queries, d.model.decoder);
  for (double k : {1e-3, 1e3}) {
    TextBank scaled = enh.text;
    for (double& v : scaled.tokens.data()) v *= k;
    scaled.repool();
    QuerySet q = language_select(enh.bottleneck, scaled, d.cfg.model.queries, d.model.decoder);
    std::vector<std::size_t> a = q.origin, b = base.origin;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
  const double bound = std::exp(d.model.decoder.log_scale);
  for (double s : base.class_scores.data()) CHECK(std::fabs(s) <= bound);
}

TEST_CASE("selected boxes lie inside the image") {
  Desk d = desk();
  for (const Box& b : d.prep.selected.boxes) {
    CHECK(b.x0() >= -1e-12);
    CHECK(b.x1() <= 1.0 + 1e-12);
    CHECK(b.w > 0.0);
  }
}

TEST_CASE("inactive queries are untouched and do not influence active ones") {
  Desk d = desk();
  const Bottleneck& memory = d.prep.enhanced.bottleneck;
  const TextBank& text = d.prep.enhanced.text;
  const auto& layer = d.model.decoder.layers[0];

  QuerySet q = d.prep.selected;
  for (std::size_t i = 0; i < q.size(); i += 3) q.active[i] = false;
  QuerySet garbage = q;
  for (std::size_t i = 0; i < q.size(); i += 3) {
    for (double& v : garbage.features.row(i)) v = 1e6;
    garbage.boxes[i] = {0.1, 0.9, 0.05, 0.05};
  }
  QuerySet a = q, b = garbage;
  decoder_layer(a, memory, layer, text, d.model.decoder);
  decoder_layer(b, memory, layer, text, d.model.decoder);
  for (std::size_t i = 0; i < q.size(); ++i) {
    if (q.active[i]) {
      CHECK(std::equal(a.features.row(i).begin(), a.features.row(i).end(), b.features.row(i).begin()));
      CHECK(a.boxes[i] == b.boxes[i]);
    } else {
      CHECK(std::equal(a.features.row(i).begin(), a.features.row(i).end(), q.features.row(i).begin()));
      CHECK(a.boxes[i] == q.boxes[i]);
      CHECK(a.confidence[i] == q.confidence[i]);
    }
  }
}

TEST_CASE("a lone active query still decodes") {
  Desk d = desk();
  QuerySet q = d.prep.selected;
  std::fill(q.active.begin(), q.active.end(), false);
  q.active[5] = true;
  decoder_layer(q, d.prep.enhanced.bottleneck, d.model.decoder.layers[0], d.prep.enhanced.text,
                d.model.decoder);
  CHECK(q.features.all_finite());
  CHECK(q.active_count() == 1);

  std::fill(q.active.begin(), q.active.end(), false);
  CHECK_THROWS_AS(decoder_layer(q, d.prep.enhanced.bottleneck, d.model.decoder.layers[0],
                                d.prep.enhanced.text, d.model.decoder),
                  StateError);
}

TEST_CASE("decode without pruning keeps every query") {
  Desk d = desk();
  DecodeResult r = decode(d.prep.selected, d.prep.enhanced.bottleneck, d.model.decoder, d.prep.enhanced.text);
  CHECK(r.trace.active_counts == std::vector<std::size_t>(d.cfg.model.decoder_layers, d.cfg.model.queries));
  CHECK(r.trace.final_active == d.cfg.model.queries);

  PruneSchedule flat;
  flat.b_low = flat.b_high = 0.0;
  flat.layers = d.cfg.model.decoder_layers;
  flat.min_keep = 0;
  DecodeResult z = decode(d.prep.selected, d.prep.enhanced.bottleneck, d.model.decoder, d.prep.enhanced.text, flat);
  CHECK(z.trace.final_active == d.cfg.model.queries);
  CHECK(z.trace.events.empty());
}

TEST_CASE("pruned trajectory shrinks and respects the floor") {
  Desk d = desk(256, 150);
  PruneSchedule s;  // 0.05 .. 0.2, beta 1, min_keep 100
  s.layers = 6;
  REQUIRE(d.cfg.model.decoder_layers == 6);
  DecodeResult r = decode(d.prep.selected, d.prep.enhanced.bottleneck, d.model.decoder, d.prep.enhanced.text, s);
  const auto& counts = r.trace.active_counts;
  REQUIRE(counts.size() == 6);
  CHECK(counts.front() == 150);
  for (std::size_t l = 1; l < counts.size(); ++l) CHECK(counts[l] <= counts[l - 1]);
  CHECK(r.trace.final_active >= 100);
  CHECK(r.trace.final_active < 150);
  CHECK(r.trace.thresholds.size() == 5);
  for (const auto& e : r.trace.events) CHECK(e.confidence < e.threshold);

  PruneSchedule wrong = s;
  wrong.layers = 9;
  CHECK_THROWS_AS(decode(d.prep.selected, d.prep.enhanced.bottleneck, d.model.decoder, d.prep.enhanced.text, wrong),
                  ConfigError);
}

TEST_CASE("mask prediction") {
  Desk d = desk();
  const FeatureMap& m = d.prep.mask_map;
  QuerySet q = d.prep.selected;
  for (std::size_t i = 0; i < q.size(); i += 2) q.active[i] = false;
  for (double& v : q.features.row(1)) v = 0.0;

  MaskSet masks = predict_masks(q, m);
  CHECK(masks.size() == q.active_count());
  CHECK(masks.height == m.height());
  CHECK(masks.width == m.width());
  CHECK(masks.stride == 4);
  CHECK(masks.foreground(0) == 0);
  for (double v : masks.logits[0].data()) CHECK(v == 0.0);
  for (std::size_t k = 0; k < masks.size(); ++k) {
    Tensor2D oracle = reference::mask_logits(q.features.row(masks.queries[k]), m);
    CHECK(testing::max_abs_diff(oracle, masks.logits[k]) < 1e-10);
  }

  FeatureMap flat(6, 5, m.channels(), 4);
  for (std::size_t y = 0; y < 6; ++y)
    for (std::size_t x = 0; x < 5; ++x)
      for (std::size_t c = 0; c < flat.channels(); ++c) flat.at(y, x, c) = 0.01 * c;
  MaskSet fm = predict_masks(q, flat);
  const auto qrow = q.features.row(fm.queries[1]);
  double dot = 0.0;
  for (std::size_t c = 0; c < flat.channels(); ++c) dot += qrow[c] * 0.01 * c;
  for (double v : fm.logits[1].data()) CHECK(std::fabs(v - dot) < 1e-12);

  FeatureMap narrow(4, 4, 3, 4);
  CHECK_THROWS_AS(predict_masks(q, narrow), DimensionError);
}

TEST_CASE("decoder layer golden at seed 42") {
  Desk d = desk();
  QuerySet q = d.prep.selected;
  decoder_layer(q, d.prep.enhanced.bottleneck, d.model.decoder.layers[0], d.prep.enhanced.text,
                d.model.decoder);
  std::vector<double> flat = q.features.data();
  for (const Box& b : q.boxes) flat.insert(flat.end(), {b.cx, b.cy, b.w, b.h});
  flat.insert(flat.end(), q.confidence.begin(), q.confidence.end());
  const double got = checksum(flat);
  
  CHECK_MESSAGE(close_rel(got, kGoldenLayer), "checksum " << testing::exact(got));
}

TEST_CASE("box sine embedding width") {
  Tensor2D e = box_sine_embedding({Box{0.5, 0.5, 0.2, 0.2}, Box{0.1, 0.3, 0.05, 0.4}}, 16);
  CHECK(e.rows() == 2);
  CHECK(e.cols() == 32);
  CHECK(e.all_finite());
}

}
