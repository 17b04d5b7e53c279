#include "bseg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bseg/errors.hpp"

namespace bseg {

namespace {
// Below this many multiply-adds a kernel runs serially; thread startup would dominate.
constexpr std::size_t kParallelWork = 1 << 15;
}  // namespace

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor2D::Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw DimensionError("Tensor2D: data length " + std::to_string(data_.size()) +
                         " != " + std::to_string(rows) + "x" + std::to_string(cols));
  }
}

bool Tensor2D::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

bool is_pyramid_stride(int stride) {
  return stride == 4 || stride == 8 || stride == 16 || stride == 32 || stride == 64;
}

FeatureMap::FeatureMap(std::size_t height, std::size_t width, std::size_t channels, int stride,
                       double fill)
    : height_(height), width_(width), channels_(channels), stride_(stride),
      data_(height * width * channels, fill) {
  if (stride < 1 || (stride & (stride - 1)) != 0) {
    throw ConfigError("FeatureMap: stride must be a power of two, got " + std::to_string(stride));
  }
}

Tensor2D FeatureMap::as_tokens() const { return Tensor2D(cells(), channels_, data_); }

FeatureMap FeatureMap::from_tokens(const Tensor2D& tokens, std::size_t height, std::size_t width,
                                   int stride) {
  if (tokens.rows() != height * width) {
    throw DimensionError("FeatureMap::from_tokens: " + std::to_string(tokens.rows()) +
                         " tokens for a " + std::to_string(height) + "x" + std::to_string(width) +
                         " grid");
  }
  FeatureMap map(height, width, tokens.cols(), stride);
  map.data_ = tokens.data();
  return map;
}

NormAffine NormAffine::identity(std::size_t dim) {
  return {std::vector<double>(dim, 1.0), std::vector<double>(dim, 0.0)};
}

Tensor2D linear(const Tensor2D& input, const Tensor2D& weight, std::span<const double> bias) {
  if (input.cols() != weight.rows()) {
    throw DimensionError("linear: input has " + std::to_string(input.cols()) +
                         " columns, weight expects " + std::to_string(weight.rows()));
  }
  if (bias.size() != weight.cols()) {
    throw DimensionError("linear: bias length " + std::to_string(bias.size()) +
                         " != output width " + std::to_string(weight.cols()));
  }
  const std::size_t n = input.rows();
  const std::size_t din = weight.rows();
  const std::size_t dout = weight.cols();
  Tensor2D out(n, dout);
  const double* w = weight.data().data();
  const bool parallel = n * din * dout >= kParallelWork;

#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(n); ++r) {
    const double* x = input.data().data() + r * din;
    double* y = out.data().data() + r * dout;
    std::copy(bias.begin(), bias.end(), y);
    for (std::size_t k = 0; k < din; ++k) {
      const double xk = x[k];
      const double* wk = w + k * dout;
      for (std::size_t c = 0; c < dout; ++c) y[c] += xk * wk[c];
    }
  }
  return out;
}

void linear_row(std::span<const double> input, const Linear& layer, std::span<double> out) {
  const std::size_t din = layer.weight.rows();
  const std::size_t dout = layer.weight.cols();
  if (input.size() != din || out.size() != dout) {
    throw DimensionError("linear_row: shape mismatch");
  }
  std::copy(layer.bias.begin(), layer.bias.end(), out.begin());
  const double* w = layer.weight.data().data();
  for (std::size_t k = 0; k < din; ++k) {
    const double xk = input[k];
    const double* wk = w + k * dout;
    for (std::size_t c = 0; c < dout; ++c) out[c] += xk * wk[c];
  }
}

void softmax_inplace(std::span<double> logits) {
  if (logits.empty()) throw DimensionError("softmax: empty input");
  const double peak = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& v : logits) {
    v = std::exp(v - peak);
    total += v;
  }
  for (double& v : logits) v /= total;
}

std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> out(logits.begin(), logits.end());
  softmax_inplace(out);
  return out;
}

std::size_t default_group_count(std::size_t dim) {
  // Up to 32 groups of at least 4 channels. Narrower groups quantize: a
  // normalized pair is always (-1, 1) or (1, -1).
  if (dim < 4) return 1;
  std::size_t g = std::min<std::size_t>(32, dim / 4);
  while (dim % g != 0) --g;
  return g;
}

Tensor2D group_norm(const Tensor2D& tokens, std::size_t groups, double eps,
                    std::span<const double> gain, std::span<const double> shift) {
  const std::size_t d = tokens.cols();
  if (groups == 0 || d % groups != 0) {
    throw ConfigError("group_norm: width " + std::to_string(d) + " not divisible into " +
                      std::to_string(groups) + " groups");
  }
  if (!(eps > 0.0)) throw ConfigError("group_norm: eps must be positive");
  if (gain.size() != d || shift.size() != d) {
    throw DimensionError("group_norm: affine parameters must have length " + std::to_string(d));
  }
  const std::size_t width = d / groups;
  Tensor2D out(tokens.rows(), d);
  const bool parallel = tokens.size() >= kParallelWork;

#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(tokens.rows()); ++r) {
    auto x = tokens.row(r);
    auto y = out.row(r);
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t lo = g * width;
      double mean = 0.0;
      for (std::size_t c = lo; c < lo + width; ++c) mean += x[c];
      mean /= static_cast<double>(width);
      double var = 0.0;
      for (std::size_t c = lo; c < lo + width; ++c) var += (x[c] - mean) * (x[c] - mean);
      var /= static_cast<double>(width);
      const double inv = 1.0 / std::sqrt(var + eps);
      for (std::size_t c = lo; c < lo + width; ++c) {
        y[c] = (x[c] - mean) * inv * gain[c] + shift[c];
      }
    }
  }
  return out;
}

void bilinear_accumulate(const FeatureMap& map, double x, double y, std::size_t channel_offset,
                         double weight, std::span<double> out) {
  const double px = x * static_cast<double>(map.width()) - 0.5;
  const double py = y * static_cast<double>(map.height()) - 0.5;
  const double fx = std::floor(px);
  const double fy = std::floor(py);
  const double ax = px - fx;
  const double ay = py - fy;
  const long x0 = static_cast<long>(fx);
  const long y0 = static_cast<long>(fy);
  const long w = static_cast<long>(map.width());
  const long h = static_cast<long>(map.height());
  const std::size_t count = out.size();
  const double corner[4] = {(1 - ax) * (1 - ay), ax * (1 - ay), (1 - ax) * ay, ax * ay};
  const long cx[4] = {x0, x0 + 1, x0, x0 + 1};
  const long cy[4] = {y0, y0, y0 + 1, y0 + 1};
  for (int k = 0; k < 4; ++k) {
    if (cx[k] < 0 || cx[k] >= w || cy[k] < 0 || cy[k] >= h) continue;
    const double cw = weight * corner[k];
    if (cw == 0.0) continue;
    const double* v = map.cell(cy[k], cx[k]).data() + channel_offset;
    for (std::size_t c = 0; c < count; ++c) out[c] += cw * v[c];
  }
}

std::vector<double> bilinear_sample(const FeatureMap& map, double x, double y) {
  std::vector<double> out(map.channels(), 0.0);
  if (map.empty()) return out;
  bilinear_accumulate(map, x, y, 0, 1.0, out);
  return out;
}

FeatureMap resize_bilinear(const FeatureMap& map, std::size_t height, std::size_t width,
                           int stride) {
  if (map.empty()) throw DimensionError("resize_bilinear: empty map");
  FeatureMap out(height, width, map.channels(), stride);
  const double sy = static_cast<double>(map.height()) / static_cast<double>(height);
  const double sx = static_cast<double>(map.width()) / static_cast<double>(width);
  const long hmax = static_cast<long>(map.height()) - 1;
  const long wmax = static_cast<long>(map.width()) - 1;
  const std::size_t channels = map.channels();
  const bool parallel = height * width * channels >= kParallelWork;

#pragma omp parallel for schedule(static) if (parallel)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(height); ++i) {
    const double py = std::max(0.0, (static_cast<double>(i) + 0.5) * sy - 0.5);
    const long y0 = std::min(static_cast<long>(py), hmax);
    const long y1 = std::min(y0 + 1, hmax);
    const double ay = py - static_cast<double>(y0);
    for (std::size_t j = 0; j < width; ++j) {
      const double px = std::max(0.0, (static_cast<double>(j) + 0.5) * sx - 0.5);
      const long x0 = std::min(static_cast<long>(px), wmax);
      const long x1 = std::min(x0 + 1, wmax);
      const double ax = px - static_cast<double>(x0);
      auto v00 = map.cell(y0, x0);
      auto v01 = map.cell(y0, x1);
      auto v10 = map.cell(y1, x0);
      auto v11 = map.cell(y1, x1);
      auto o = out.cell(i, j);
      for (std::size_t c = 0; c < channels; ++c) {
        o[c] = (1 - ay) * ((1 - ax) * v00[c] + ax * v01[c]) + ay * ((1 - ax) * v10[c] + ax * v11[c]);
      }
    }
  }
  return out;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_grad: step must be positive");
  std::vector<double> probe(x.begin(), x.end());
  std::vector<double> grad(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = probe[i];
    probe[i] = saved + h;
    const double up = f(probe);
    probe[i] = saved - h;
    const double down = f(probe);
    probe[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff_grad: non-finite evaluation at coordinate " +
                         std::to_string(i));
    }
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double inverse_sigmoid(double p, double eps) {
  const double clamped = std::clamp(p, 0.0, 1.0);
  const double a = std::max(clamped, eps);
  const double b = std::max(1.0 - clamped, eps);
  return std::log(a / b);
}

}  // namespace bseg
