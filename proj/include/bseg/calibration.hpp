#pragma once

#include <cstddef>
#include <limits>
#include <vector>

#include "bseg/queries.hpp"
#include "bseg/tensor.hpp"

namespace bseg {

struct GroundTruth {
  std::vector<Box> boxes;
  std::vector<std::size_t> labels;

  std::size_t size() const { return boxes.size(); }
  void validate(std::size_t categories) const;
};

struct CalibrationConfig {
  double alpha = 0.25;
  double gamma = 2.0;
  // Localization target for every class that is not a matched prediction's label.
  double unmatched_target = 0.0;

  void validate() const;
};

// IoU of two (cx, cy, w, h) boxes. A zero-area box yields 0 and sets
// *degenerate when given.
double box_iou(const Box& a, const Box& b, bool* degenerate = nullptr);
double box_iou_xyxy(double ax0, double ay0, double ax1, double ay1, double bx0, double by0,
                    double bx1, double by1);

inline constexpr std::size_t kUnmatched = std::numeric_limits<std::size_t>::max();

// Minimum-cost one-to-one assignment for a rectangular cost matrix. Returns,
// per row, the matched column or kUnmatched; min(rows, cols) pairs are made.
std::vector<std::size_t> min_cost_assignment(const Tensor2D& cost);
double assignment_cost(const Tensor2D& cost, const std::vector<std::size_t>& assignment);

// Cost matrix -IoU(b_i, y_j) - confidence(i, label_j) over predictions i and
// ground truths j. confidence is N x C in (0, 1).
Tensor2D matching_cost(const std::vector<Box>& boxes, const Tensor2D& confidence,
                       const GroundTruth& gt);

// Prediction index -> ground-truth index or kUnmatched.
std::vector<std::size_t> match(const std::vector<Box>& boxes, const Tensor2D& confidence,
                               const GroundTruth& gt);
// Active queries only; class confidences are sigmoid(class_scores + logit_bias).
// Inactive queries are reported as kUnmatched.
std::vector<std::size_t> match(const QuerySet& queries, const GroundTruth& gt,
                               double logit_bias = 0.0);

double phi_t(double sigma, std::size_t j, std::size_t t);

// One (i, j) term and its derivative in sigma. The term is
// -alpha |sigma - target|^gamma log(phi), phi = sigma on the matched class and
// 1 - sigma elsewhere.
struct TermValue {
  double value = 0.0;
  double grad = 0.0;
};
TermValue calibration_term(double sigma, double target, bool matched_class,
                           const CalibrationConfig& cfg);

struct CalibrationResult {
  double loss = 0.0;
  Tensor2D grad;                  // d loss / d sigma, N x C
  std::vector<double> sigma_loc;  // IoU target per prediction, NaN when unmatched
};

// Mean over all N x C terms. target_class[i] is the matched label or
// kUnmatched; sigma_loc[i] is ignored for unmatched rows.
CalibrationResult calibration_loss(const Tensor2D& sigma, const std::vector<double>& sigma_loc,
                                   const std::vector<std::size_t>& target_class,
                                   const CalibrationConfig& cfg);

CalibrationResult calibration_loss(const Tensor2D& sigma, const std::vector<Box>& boxes,
                                   const std::vector<std::size_t>& assignment,
                                   const GroundTruth& gt, const CalibrationConfig& cfg);

}  // namespace bseg
