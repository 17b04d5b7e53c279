#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace bseg {

// Dense row-major matrix of doubles. Used for token matrices (N x d) and
// weight matrices (d_in x d_out).
class Tensor2D {
 public:
  Tensor2D() = default;
  Tensor2D(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor2D(std::size_t rows, std::size_t cols, std::vector<double> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool all_finite() const;

  friend bool operator==(const Tensor2D&, const Tensor2D&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Spatial feature map stored height-major then width then channel (HWC).
// Stride is the downsampling factor relative to the input image.
class FeatureMap {
 public:
  FeatureMap() = default;
  FeatureMap(std::size_t height, std::size_t width, std::size_t channels, int stride,
             double fill = 0.0);

  std::size_t height() const { return height_; }
  std::size_t width() const { return width_; }
  std::size_t channels() const { return channels_; }
  std::size_t cells() const { return height_ * width_; }
  int stride() const { return stride_; }
  bool empty() const { return data_.empty(); }

  double& at(std::size_t y, std::size_t x, std::size_t c) {
    return data_[(y * width_ + x) * channels_ + c];
  }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return data_[(y * width_ + x) * channels_ + c];
  }
  std::span<const double> cell(std::size_t y, std::size_t x) const {
    return {data_.data() + (y * width_ + x) * channels_, channels_};
  }
  std::span<double> cell(std::size_t y, std::size_t x) {
    return {data_.data() + (y * width_ + x) * channels_, channels_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  // Row-major flattening of the grid into a (height*width) x channels matrix.
  Tensor2D as_tokens() const;
  static FeatureMap from_tokens(const Tensor2D& tokens, std::size_t height, std::size_t width,
                                int stride);

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;

 private:
  std::size_t height_ = 0;
  std::size_t width_ = 0;
  std::size_t channels_ = 0;
  int stride_ = 1;
  std::vector<double> data_;
};

bool is_pyramid_stride(int stride);

// Affine map out[n] = input[n] * weight + bias.  weight is d_in x d_out.
struct Linear {
  Tensor2D weight;
  std::vector<double> bias;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }
};

// Per-channel affine parameters applied after group normalization.
struct NormAffine {
  std::vector<double> gain;
  std::vector<double> shift;

  static NormAffine identity(std::size_t dim);
};

Tensor2D linear(const Tensor2D& input, const Tensor2D& weight, std::span<const double> bias);
inline Tensor2D linear(const Tensor2D& input, const Linear& layer) {
  return linear(input, layer.weight, layer.bias);
}
// Single-row convenience, used by per-query kernels.
void linear_row(std::span<const double> input, const Linear& layer, std::span<double> out);

std::vector<double> softmax(std::span<const double> logits);
// In-place variant over a contiguous slice.
void softmax_inplace(std::span<double> logits);

// Group-norm epsilon of the model layers. Output variance is v / (v + eps),
// so this keeps groups with input variance down to 1e-3 within 1e-6 of unit.
inline constexpr double kNormEps = 1e-9;

// Number of groups used when the caller does not specify one.
std::size_t default_group_count(std::size_t dim);

// Normalizes each token over groups of dim/groups consecutive channels, then
// applies the per-channel gain and shift.
Tensor2D group_norm(const Tensor2D& tokens, std::size_t groups, double eps,
                    std::span<const double> gain, std::span<const double> shift);
inline Tensor2D group_norm(const Tensor2D& tokens, std::size_t groups, double eps,
                           const NormAffine& affine) {
  return group_norm(tokens, groups, eps, affine.gain, affine.shift);
}

// Bilinear interpolation at normalized coordinates (x, y), where (0,0) is the
// top-left image corner and (1,1) the bottom-right.  Cell centers sit at
// ((j + 0.5) / width, (i + 0.5) / height).  Neighbors outside the grid
// contribute zero.
std::vector<double> bilinear_sample(const FeatureMap& map, double x, double y);

// Accumulates weight * sample(map, x, y)[offset .. offset+count) into out.
void bilinear_accumulate(const FeatureMap& map, double x, double y, std::size_t channel_offset,
                         double weight, std::span<double> out);

// Resizes a map to (height, width) with bilinear interpolation and border
// clamping, the usual image-resize convention. Constant fields stay constant.
FeatureMap resize_bilinear(const FeatureMap& map, std::size_t height, std::size_t width,
                           int stride);

// Central-difference gradient of f at x with step h.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::span<const double> x, double h);

double sigmoid(double x);
double inverse_sigmoid(double p, double eps = 1e-5);

}  // namespace bseg
