#include "bseg/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bseg/errors.hpp"

namespace bseg {

void GroundTruth::validate(std::size_t categories) const {
  if (labels.size() != boxes.size()) throw DimensionError("ground truth: one label per box");
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    if (!(boxes[i].w > 0.0 && boxes[i].h > 0.0)) {
      throw ConfigError("ground truth box " + std::to_string(i) + " has no area");
    }
    if (labels[i] >= categories) {
      throw ConfigError("ground truth label " + std::to_string(labels[i]) + " >= " +
                        std::to_string(categories) + " categories");
    }
  }
}

void CalibrationConfig::validate() const {
  if (!(alpha > 0.0)) throw ConfigError("calibration alpha must be positive");
  if (!(gamma >= 0.0)) throw ConfigError("calibration gamma must be non-negative");
  if (!(unmatched_target >= 0.0 && unmatched_target <= 1.0)) {
    throw ConfigError("unmatched_target must lie in [0, 1]");
  }
}

double box_iou_xyxy(double ax0, double ay0, double ax1, double ay1, double bx0, double by0,
                    double bx1, double by1) {
  const double area_a = std::max(ax1 - ax0, 0.0) * std::max(ay1 - ay0, 0.0);
  const double area_b = std::max(bx1 - bx0, 0.0) * std::max(by1 - by0, 0.0);
  if (area_a <= 0.0 || area_b <= 0.0) return 0.0;
  const double iw = std::max(std::min(ax1, bx1) - std::max(ax0, bx0), 0.0);
  const double ih = std::max(std::min(ay1, by1) - std::max(ay0, by0), 0.0);
  const double inter = iw * ih;
  return inter / (area_a + area_b - inter);
}

double box_iou(const Box& a, const Box& b, bool* degenerate) {
  if (degenerate) *degenerate = a.area() <= 0.0 || b.area() <= 0.0;
  return box_iou_xyxy(a.x0(), a.y0(), a.x1(), a.y1(), b.x0(), b.y0(), b.x1(), b.y1());
}

std::vector<std::size_t> min_cost_assignment(const Tensor2D& cost) {
  for (double c : cost.data()) {
    if (!std::isfinite(c)) throw NumericError("assignment: non-finite cost");
  }
  const bool transpose = cost.rows() > cost.cols();
  const std::size_t n = transpose ? cost.cols() : cost.rows();
  const std::size_t m = transpose ? cost.rows() : cost.cols();
  auto a = [&](std::size_t i, std::size_t j) { return transpose ? cost(j, i) : cost(i, j); };

  // Shortest augmenting paths with row/column potentials, 1-based with a
  // virtual column 0.
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<std::size_t> p(m + 1, 0), way(m + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<bool> used(m + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }

  std::vector<std::size_t> out(cost.rows(), kUnmatched);
  for (std::size_t j = 1; j <= m; ++j) {
    if (p[j] == 0) continue;
    if (transpose) {
      out[j - 1] = p[j] - 1;
    } else {
      out[p[j] - 1] = j - 1;
    }
  }
  return out;
}

double assignment_cost(const Tensor2D& cost, const std::vector<std::size_t>& assignment) {
  double total = 0.0;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != kUnmatched) total += cost(i, assignment[i]);
  }
  return total;
}

Tensor2D matching_cost(const std::vector<Box>& boxes, const Tensor2D& confidence,
                       const GroundTruth& gt) {
  if (confidence.rows() != boxes.size()) {
    throw DimensionError("matching: one confidence row per prediction required");
  }
  gt.validate(confidence.cols());
  Tensor2D cost(boxes.size(), gt.size());
  for (std::size_t i = 0; i < boxes.size(); ++i) {
    for (std::size_t j = 0; j < gt.size(); ++j) {
      cost(i, j) = -box_iou(boxes[i], gt.boxes[j]) - confidence(i, gt.labels[j]);
    }
  }
  return cost;
}

std::vector<std::size_t> match(const std::vector<Box>& boxes, const Tensor2D& confidence,
                               const GroundTruth& gt) {
  if (gt.size() == 0 || boxes.empty()) {
    if (confidence.rows() != boxes.size()) {
      throw DimensionError("matching: one confidence row per prediction required");
    }
    return std::vector<std::size_t>(boxes.size(), kUnmatched);
  }
  return min_cost_assignment(matching_cost(boxes, confidence, gt));
}

std::vector<std::size_t> match(const QuerySet& queries, const GroundTruth& gt, double logit_bias) {
  const std::vector<std::size_t> rows = queries.active_indices();
  std::vector<Box> boxes;
  Tensor2D conf(rows.size(), queries.class_scores.cols());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    boxes.push_back(queries.boxes[rows[k]]);
    for (std::size_t j = 0; j < conf.cols(); ++j) {
      conf(k, j) = sigmoid(queries.class_scores(rows[k], j) + logit_bias);
    }
  }
  const std::vector<std::size_t> compact = match(boxes, conf, gt);
  std::vector<std::size_t> out(queries.size(), kUnmatched);
  for (std::size_t k = 0; k < rows.size(); ++k) out[rows[k]] = compact[k];
  return out;
}

double phi_t(double sigma, std::size_t j, std::size_t t) {
  if (!(sigma > 0.0 && sigma < 1.0)) {
    throw NumericError("phi_t: confidence " + std::to_string(sigma) + " outside (0, 1)");
  }
  return j == t ? sigma : 1.0 - sigma;
}

TermValue calibration_term(double sigma, double target, bool matched_class,
                           const CalibrationConfig& cfg) {
  if (!(sigma > 0.0 && sigma < 1.0)) {
    throw NumericError("calibration: confidence " + std::to_string(sigma) + " outside (0, 1)");
  }
  const double diff = sigma - target;
  const double ad = std::abs(diff);
  const double g = cfg.gamma;
  const double mod = g == 0.0 ? 1.0 : std::pow(ad, g);
  // Subgradient 0 at the kink, where the modulation vanishes.
  double dmod = 0.0;
  if (g != 0.0 && ad > 0.0) dmod = g * std::pow(ad, g - 1.0) * (diff > 0.0 ? 1.0 : -1.0);

  const double phi = matched_class ? sigma : 1.0 - sigma;
  const double dphi = matched_class ? 1.0 : -1.0;
  const double log_phi = std::log(phi);
  return {-cfg.alpha * mod * log_phi, -cfg.alpha * (dmod * log_phi + mod * dphi / phi)};
}

CalibrationResult calibration_loss(const Tensor2D& sigma, const std::vector<double>& sigma_loc,
                                   const std::vector<std::size_t>& target_class,
                                   const CalibrationConfig& cfg) {
  cfg.validate();
  const std::size_t n = sigma.rows();
  const std::size_t c = sigma.cols();
  if (sigma_loc.size() != n || target_class.size() != n) {
    throw DimensionError("calibration: one target per prediction required");
  }
  CalibrationResult r;
  r.grad = Tensor2D(n, c);
  r.sigma_loc.assign(n, std::numeric_limits<double>::quiet_NaN());
  if (n == 0 || c == 0) return r;
  const double scale = 1.0 / static_cast<double>(n * c);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = target_class[i];
    if (t != kUnmatched) {
      if (t >= c) throw DimensionError("calibration: target class out of range");
      if (!(sigma_loc[i] >= 0.0 && sigma_loc[i] <= 1.0)) {
        throw NumericError("calibration: localization target outside [0, 1]");
      }
      r.sigma_loc[i] = sigma_loc[i];
    }
    for (std::size_t j = 0; j < c; ++j) {
      const bool matched = t != kUnmatched && j == t;
      const TermValue term =
          calibration_term(sigma(i, j), matched ? sigma_loc[i] : cfg.unmatched_target, matched, cfg);
      r.loss += term.value * scale;
      r.grad(i, j) = term.grad * scale;
    }
  }
  return r;
}

CalibrationResult calibration_loss(const Tensor2D& sigma, const std::vector<Box>& boxes,
                                   const std::vector<std::size_t>& assignment,
                                   const GroundTruth& gt, const CalibrationConfig& cfg) {
  if (boxes.size() != sigma.rows() || assignment.size() != sigma.rows()) {
    throw DimensionError("calibration: one box and assignment entry per prediction required");
  }
  gt.validate(sigma.cols());
  std::vector<bool> taken(gt.size(), false);
  std::vector<double> loc(sigma.rows(), 0.0);
  std::vector<std::size_t> target(sigma.rows(), kUnmatched);
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    const std::size_t g = assignment[i];
    if (g == kUnmatched) continue;
    if (g >= gt.size() || taken[g]) throw ConfigError("calibration: invalid assignment");
    taken[g] = true;
    loc[i] = box_iou(boxes[i], gt.boxes[g]);
    target[i] = gt.labels[g];
  }
  return calibration_loss(sigma, loc, target, cfg);
}

}  // namespace bseg
