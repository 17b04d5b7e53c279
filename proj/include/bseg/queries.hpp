#pragma once

#include <cstddef>
#include <vector>

#include "bseg/tensor.hpp"

namespace bseg {

// Normalized (cx, cy, w, h) box.
struct Box {
  double cx = 0.5;
  double cy = 0.5;
  double w = 0.0;
  double h = 0.0;

  double x0() const { return cx - 0.5 * w; }
  double y0() const { return cy - 0.5 * h; }
  double x1() const { return cx + 0.5 * w; }
  double y1() const { return cy + 0.5 * h; }
  double area() const { return w > 0.0 && h > 0.0 ? w * h : 0.0; }

  static Box from_corners(double x0, double y0, double x1, double y1) {
    return {(x0 + x1) / 2.0, (y0 + y1) / 2.0, x1 - x0, y1 - y0};
  }
  friend bool operator==(const Box&, const Box&) = default;
};

// Decoder queries. Rows stay in place when a query is deactivated; the
// active flags shrink under pruning and never grow back.
struct QuerySet {
  Tensor2D features;            // N_q x d
  Tensor2D class_scores;        // N_q x C scaled cosine similarities
  std::vector<double> scores;   // row max of class_scores
  std::vector<double> confidence;  // sigmoid-mapped score in (0, 1)
  std::vector<Box> boxes;
  std::vector<bool> active;
  std::vector<std::size_t> origin;  // bottleneck token each query was selected from

  std::size_t size() const { return active.size(); }
  std::size_t active_count() const;
  std::vector<std::size_t> active_indices() const;
};

}  // namespace bseg
