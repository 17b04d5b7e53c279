#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

#include "bseg/calibration.hpp"
#include "bseg/encoder.hpp"

namespace bseg {

struct SceneSpec {
  std::size_t image_height = 128;
  std::size_t image_width = 128;
  std::array<std::size_t, 5> backbone_channels = {32, 32, 32, 32, 32};
  std::size_t text_dim = 128;
  std::size_t categories = 4;
  std::size_t tokens_per_category = 2;
  std::size_t objects = 3;
  std::size_t field_waves = 4;
  double field_scale = 1.0;
  double bump_amplitude = 3.0;

  void validate() const;
};

// Raw backbone pyramid (backbone channel widths), planted objects and a text
// bank of unit-norm category tokens.
struct SyntheticScene {
  FeaturePyramid pyramid;
  GroundTruth truth;
  TextBank text;
};

// Smooth fields are sums of random plane waves; every object adds a
// label-specific channel pattern under a raised-cosine window inside its box.
SyntheticScene gen_scene(std::uint64_t seed, const SceneSpec& spec);

}  // namespace bseg
