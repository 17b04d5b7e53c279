#include "bseg/scene.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "bseg/errors.hpp"
#include "bseg/rng.hpp"

namespace bseg {

void SceneSpec::validate() const {
  if (image_height == 0 || image_width == 0) throw ConfigError("scene: empty image");
  for (std::size_t c : backbone_channels) {
    if (c == 0) throw ConfigError("scene: backbone channels must be positive");
  }
  if (text_dim == 0 || categories == 0 || tokens_per_category == 0) {
    throw ConfigError("scene: the text bank needs categories, tokens and a width");
  }
  if (!(field_scale >= 0.0) || !(bump_amplitude >= 0.0)) {
    throw ConfigError("scene: amplitudes must be non-negative");
  }
}

namespace {

struct Wave {
  double fx, fy;
  std::vector<double> amp, phase;  // per channel
};

std::vector<double> unit_vector(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  double norm = 0.0;
  for (double& x : v) {
    x = rng.normal();
    norm += x * x;
  }
  norm = std::sqrt(norm);
  for (double& x : v) x /= norm;
  return v;
}

// 1 at the box center falling to 0 at its border.
double window(const Box& b, double x, double y) {
  const double u = (x - b.cx) / (0.5 * b.w);
  const double v = (y - b.cy) / (0.5 * b.h);
  if (std::abs(u) >= 1.0 || std::abs(v) >= 1.0) return 0.0;
  return 0.25 * (1.0 + std::cos(std::numbers::pi * u)) * (1.0 + std::cos(std::numbers::pi * v));
}

}  // namespace

SyntheticScene gen_scene(std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  SyntheticScene scene;

  Rng obj_rng(seed, "scene/objects");
  for (std::size_t k = 0; k < spec.objects; ++k) {
    const double w = obj_rng.uniform(0.1, 0.4);
    const double h = obj_rng.uniform(0.1, 0.4);
    const double cx = obj_rng.uniform(0.5 * w, 1.0 - 0.5 * w);
    const double cy = obj_rng.uniform(0.5 * h, 1.0 - 0.5 * h);
    scene.truth.boxes.push_back({cx, cy, w, h});
    scene.truth.labels.push_back(static_cast<std::size_t>(obj_rng.below(spec.categories)));
  }

  const auto grid = pyramid_grid(spec.image_height, spec.image_width);
  for (std::size_t level = 0; level < 5; ++level) {
    const std::size_t ch = spec.backbone_channels[level];
    Rng rng(seed, "scene/level/" + std::to_string(level));
    std::vector<Wave> waves(spec.field_waves);
    for (Wave& wave : waves) {
      wave.fx = rng.uniform(-3.0, 3.0);
      wave.fy = rng.uniform(-3.0, 3.0);
      wave.amp.resize(ch);
      wave.phase.resize(ch);
      for (std::size_t c = 0; c < ch; ++c) {
        wave.amp[c] = spec.field_scale * rng.normal() / std::sqrt(static_cast<double>(waves.size()));
        wave.phase[c] = rng.uniform(0.0, 2.0 * std::numbers::pi);
      }
    }
    std::vector<std::vector<double>> patterns;
    for (std::size_t c = 0; c < spec.categories; ++c) {
      Rng pr = rng.fork("pattern/" + std::to_string(c));
      std::vector<double> p = unit_vector(ch, pr);
      for (double& v : p) v *= spec.bump_amplitude * std::sqrt(static_cast<double>(ch));
      patterns.push_back(std::move(p));
    }

    FeatureMap map(grid[level].height, grid[level].width, ch, kPyramidStrides[level]);
    for (std::size_t i = 0; i < map.height(); ++i) {
      const double y = (static_cast<double>(i) + 0.5) / static_cast<double>(map.height());
      for (std::size_t j = 0; j < map.width(); ++j) {
        const double x = (static_cast<double>(j) + 0.5) / static_cast<double>(map.width());
        auto cell = map.cell(i, j);
        for (const Wave& wave : waves) {
          const double arg = 2.0 * std::numbers::pi * (wave.fx * x + wave.fy * y);
          for (std::size_t c = 0; c < ch; ++c) cell[c] += wave.amp[c] * std::sin(arg + wave.phase[c]);
        }
        for (std::size_t k = 0; k < scene.truth.size(); ++k) {
          const double wgt = window(scene.truth.boxes[k], x, y);
          if (wgt == 0.0) continue;
          const auto& p = patterns[scene.truth.labels[k]];
          for (std::size_t c = 0; c < ch; ++c) cell[c] += wgt * p[c];
        }
      }
    }
    scene.pyramid.levels[level] = std::move(map);
  }

  Rng text_rng(seed, "scene/text");
  const std::size_t n_tokens = spec.categories * spec.tokens_per_category;
  scene.text.tokens = Tensor2D(n_tokens, spec.text_dim);
  for (std::size_t t = 0; t < n_tokens; ++t) {
    const std::vector<double> v = unit_vector(spec.text_dim, text_rng);
    std::copy(v.begin(), v.end(), scene.text.tokens.row(t).begin());
  }
  for (std::size_t c = 0; c < spec.categories; ++c) {
    scene.text.spans.emplace_back(c * spec.tokens_per_category, (c + 1) * spec.tokens_per_category);
  }
  scene.text.repool();
  return scene;
}

}  // namespace bseg
