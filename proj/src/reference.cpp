#include "bseg/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bseg/errors.hpp"

namespace bseg::reference {

namespace {

double dot_column(std::span<const double> x, const Linear& l, std::size_t col) {
  double s = l.bias[col];
  for (std::size_t k = 0; k < x.size(); ++k) s += x[k] * l.weight(k, col);
  return s;
}

std::vector<double> project_row(std::span<const double> x, const Linear& l) {
  std::vector<double> y(l.weight.cols());
  for (std::size_t c = 0; c < y.size(); ++c) y[c] = dot_column(x, l, c);
  return y;
}

std::vector<double> plain_softmax(const std::vector<double>& v) {
  double peak = v[0];
  for (double x : v) peak = x > peak ? x : peak;
  std::vector<double> out(v.size());
  double total = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - peak);
    total += out[i];
  }
  for (double& x : out) x /= total;
  return out;
}

}  // namespace

Tensor2D matmul_bias(const Tensor2D& input, const Tensor2D& weight, std::span<const double> bias) {
  if (input.cols() != weight.rows() || bias.size() != weight.cols()) {
    throw DimensionError("reference matmul: shape mismatch");
  }
  Tensor2D out(input.rows(), weight.cols());
  for (std::size_t i = 0; i < input.rows(); ++i) {
    for (std::size_t j = 0; j < weight.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < input.cols(); ++k) s += input(i, k) * weight(k, j);
      out(i, j) = s + bias[j];
    }
  }
  return out;
}

std::vector<double> bilinear_sample(const FeatureMap& map, double x, double y) {
  std::vector<double> out(map.channels(), 0.0);
  const double px = x * static_cast<double>(map.width()) - 0.5;
  const double py = y * static_cast<double>(map.height()) - 0.5;
  const long x0 = static_cast<long>(std::floor(px));
  const long y0 = static_cast<long>(std::floor(py));
  for (long yy = y0; yy <= y0 + 1; ++yy) {
    for (long xx = x0; xx <= x0 + 1; ++xx) {
      if (xx < 0 || yy < 0 || xx >= static_cast<long>(map.width()) ||
          yy >= static_cast<long>(map.height())) {
        continue;
      }
      const double w = (1.0 - std::abs(px - static_cast<double>(xx))) *
                       (1.0 - std::abs(py - static_cast<double>(yy)));
      for (std::size_t c = 0; c < map.channels(); ++c) out[c] += w * map.at(yy, xx, c);
    }
  }
  return out;
}

Tensor2D group_norm(const Tensor2D& tokens, std::size_t groups, double eps,
                    std::span<const double> gain, std::span<const double> shift) {
  const std::size_t d = tokens.cols();
  if (groups == 0 || d % groups != 0) throw ConfigError("reference group_norm: bad group count");
  const std::size_t width = d / groups;
  Tensor2D out(tokens.rows(), d);
  for (std::size_t r = 0; r < tokens.rows(); ++r) {
    for (std::size_t g = 0; g < groups; ++g) {
      double sum = 0.0, sq = 0.0;
      for (std::size_t c = g * width; c < (g + 1) * width; ++c) sum += tokens(r, c);
      const double mean = sum / static_cast<double>(width);
      for (std::size_t c = g * width; c < (g + 1) * width; ++c) {
        sq += (tokens(r, c) - mean) * (tokens(r, c) - mean);
      }
      const double var = sq / static_cast<double>(width);
      for (std::size_t c = g * width; c < (g + 1) * width; ++c) {
        out(r, c) = gain[c] * (tokens(r, c) - mean) / std::sqrt(var + eps) + shift[c];
      }
    }
  }
  return out;
}

Tensor2D cross_attention(const Tensor2D& queries, const Tensor2D& context,
                         const AttentionParams& params) {
  if (context.rows() == 0) throw DimensionError("reference attention: empty context");
  const std::size_t d = params.dim;
  const std::size_t hd = d / params.heads;
  std::vector<std::vector<double>> keys, values;
  for (std::size_t j = 0; j < context.rows(); ++j) {
    keys.push_back(project_row(context.row(j), params.key));
    values.push_back(project_row(context.row(j), params.value));
  }
  Tensor2D out(queries.rows(), d);
  for (std::size_t i = 0; i < queries.rows(); ++i) {
    const std::vector<double> q = project_row(queries.row(i), params.query);
    std::vector<double> concat(d, 0.0);
    for (std::size_t h = 0; h < params.heads; ++h) {
      std::vector<double> s(context.rows());
      for (std::size_t j = 0; j < context.rows(); ++j) {
        double dot = 0.0;
        for (std::size_t c = 0; c < hd; ++c) dot += q[h * hd + c] * keys[j][h * hd + c];
        s[j] = dot / std::sqrt(static_cast<double>(hd));
      }
      const std::vector<double> a = plain_softmax(s);
      for (std::size_t j = 0; j < context.rows(); ++j) {
        for (std::size_t c = 0; c < hd; ++c) concat[h * hd + c] += a[j] * values[j][h * hd + c];
      }
    }
    const std::vector<double> y = project_row(concat, params.output);
    for (std::size_t c = 0; c < d; ++c) out(i, c) = y[c];
  }
  return out;
}

Tensor2D brute_force_deform_oracle(const Tensor2D& queries, const ReferencePoints& refs,
                                   std::span<const FeatureMap> value_maps,
                                   const DeformParams& params) {
  if (refs.size() != queries.rows()) {
    throw DimensionError("deform oracle: reference/query count mismatch");
  }
  if (value_maps.size() != params.levels) {
    throw DimensionError("deform oracle: value map count != levels");
  }
  const std::size_t d = params.dim;
  const std::size_t H = params.heads;
  const std::size_t L = params.levels;
  const std::size_t P = params.points;
  const std::size_t hd = d / H;
  Tensor2D out(queries.rows(), d);

  for (std::size_t i = 0; i < queries.rows(); ++i) {
    auto q = queries.row(i);
    std::vector<double> concat(d, 0.0);
    for (std::size_t h = 0; h < H; ++h) {
      std::vector<double> logits(L * P);
      for (std::size_t l = 0; l < L; ++l) {
        for (std::size_t p = 0; p < P; ++p) {
          logits[l * P + p] = dot_column(q, params.weight, (h * L + l) * P + p);
        }
      }
      const std::vector<double> a = plain_softmax(logits);
      for (std::size_t l = 0; l < L; ++l) {
        const FeatureMap& m = value_maps[l];
        for (std::size_t p = 0; p < P; ++p) {
          const std::size_t slot = (h * L + l) * P + p;
          const double dx = dot_column(q, params.offset, 2 * slot);
          const double dy = dot_column(q, params.offset, 2 * slot + 1);
          const double x = refs[i].x + dx / static_cast<double>(m.width());
          const double y = refs[i].y + dy / static_cast<double>(m.height());
          const double px = x * static_cast<double>(m.width()) - 0.5;
          const double py = y * static_cast<double>(m.height()) - 0.5;
          const long x0 = static_cast<long>(std::floor(px));
          const long y0 = static_cast<long>(std::floor(py));
          for (long yy = y0; yy <= y0 + 1; ++yy) {
            for (long xx = x0; xx <= x0 + 1; ++xx) {
              if (xx < 0 || yy < 0 || xx >= static_cast<long>(m.width()) ||
                  yy >= static_cast<long>(m.height())) {
                continue;
              }
              const double w = (1.0 - std::abs(px - static_cast<double>(xx))) *
                               (1.0 - std::abs(py - static_cast<double>(yy)));
              auto cell = m.cell(yy, xx);
              for (std::size_t c = 0; c < hd; ++c) {
                const double v = dot_column(cell, params.value, h * hd + c);
                concat[h * hd + c] += a[l * P + p] * w * v;
              }
            }
          }
        }
      }
    }
    for (std::size_t c = 0; c < d; ++c) out(i, c) = dot_column(concat, params.output, c);
  }
  return out;
}

double brute_force_assignment_cost(const Tensor2D& cost) {
  const bool transpose = cost.rows() > cost.cols();
  const std::size_t n = transpose ? cost.cols() : cost.rows();
  const std::size_t m = transpose ? cost.rows() : cost.cols();
  if (n == 0) return 0.0;
  // Every injective map of the n short-side items into the m long-side items.
  std::vector<std::size_t> cols(m);
  for (std::size_t j = 0; j < m; ++j) cols[j] = j;
  double best = std::numeric_limits<double>::infinity();
  do {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += transpose ? cost(cols[i], i) : cost(i, cols[i]);
    best = std::min(best, total);
  } while (std::next_permutation(cols.begin(), cols.end()));
  return best;
}

std::vector<bool> prune_loop(const std::vector<double>& confidence, const std::vector<bool>& active,
                             double tau, std::size_t min_keep) {
  std::vector<bool> out = active;
  std::size_t survivors = 0;
  for (std::size_t i = 0; i < active.size(); ++i) {
    if (active[i] && confidence[i] >= tau) ++survivors;
  }
  if (survivors >= min_keep) {
    for (std::size_t i = 0; i < active.size(); ++i) {
      if (active[i] && confidence[i] < tau) out[i] = false;
    }
    return out;
  }
  // Repeatedly take the best remaining active query.
  std::vector<bool> keep(active.size(), false);
  for (std::size_t round = 0; round < min_keep; ++round) {
    std::size_t best = active.size();
    for (std::size_t i = 0; i < active.size(); ++i) {
      if (!active[i] || keep[i]) continue;
      if (best == active.size() || confidence[i] > confidence[best]) best = i;
    }
    if (best == active.size()) break;
    keep[best] = true;
  }
  for (std::size_t i = 0; i < active.size(); ++i) out[i] = active[i] && keep[i];
  return out;
}

Tensor2D mask_logits(std::span<const double> query, const FeatureMap& map) {
  if (query.size() != map.channels()) throw DimensionError("mask oracle: width mismatch");
  Tensor2D out(map.height(), map.width());
  for (std::size_t y = 0; y < map.height(); ++y) {
    for (std::size_t x = 0; x < map.width(); ++x) {
      double dot = 0.0;
      for (std::size_t c = 0; c < map.channels(); ++c) dot += query[c] * map.at(y, x, c);
      out(y, x) = dot;
    }
  }
  return out;
}

}  // namespace bseg::reference
