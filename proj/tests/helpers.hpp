#pragma once

#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "bseg/rng.hpp"
#include "bseg/tensor.hpp"

namespace testing {

inline bseg::Tensor2D random_tensor(std::size_t r, std::size_t c, bseg::Rng& rng, double scale = 1.0) {
  bseg::Tensor2D t(r, c);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

inline bseg::FeatureMap random_map(std::size_t h, std::size_t w, std::size_t c, bseg::Rng& rng,
                                   int stride = 8) {
  bseg::FeatureMap m(h, w, c, stride);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

inline double max_abs_diff(const bseg::Tensor2D& a, const bseg::Tensor2D& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return INFINITY;
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::fmax(m, std::fabs(a.data()[i] - b.data()[i]));
  return m;
}

}  // namespace testing

namespace testing {

// Position-weighted sum; catches permutations as well as value drift.
inline double checksum(const std::vector<double>& v) {
  double s = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) s += static_cast<double>(i % 7 + 1) * v[i];
  return s;
}

inline bool close_rel(double a, double b, double tol = 1e-9) {
  return std::fabs(a - b) <= tol * std::fmax(1.0, std::fmax(std::fabs(a), std::fabs(b)));
}

inline std::string exact(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace testing
