#include "bseg/verify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "bseg/attention.hpp"
#include "bseg/calibration.hpp"
#include "bseg/decoder.hpp"
#include "bseg/errors.hpp"
#include "bseg/pruning.hpp"
#include "bseg/reference.hpp"
#include "bseg/rng.hpp"

namespace bseg {

Fault fault_from_string(const std::string& name) {
  if (name.empty() || name == "none") return Fault::none;
  if (name == "deform-offset") return Fault::deform_offset;
  if (name == "grad-sign") return Fault::grad_sign;
  throw ConfigError("unknown fault '" + name + "' (expected deform-offset or grad-sign)");
}

namespace {

std::string sci(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

Tensor2D random_tensor(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor2D t(r, c);
  for (double& v : t.data()) v = scale * rng.normal();
  return t;
}

FeatureMap random_map(std::size_t h, std::size_t w, std::size_t c, Rng& rng) {
  FeatureMap m(h, w, c, 8);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

void randomize_bias(Linear& l, Rng& rng, double scale) {
  for (double& b : l.bias) b = scale * rng.normal();
}

double max_abs_diff(const Tensor2D& a, const Tensor2D& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
  return m;
}

CheckResult below(const std::string& name, double value, double limit) {
  return {name, value < limit, "max diff " + sci(value) + " (limit " + sci(limit) + ")"};
}

}  // namespace

double deform_oracle_max_diff(std::uint64_t seed, std::size_t instances, Fault fault) {
  Rng rng(seed, "verify/deform");
  double worst = 0.0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t heads = 1 + rng.below(2);
    const std::size_t dim = heads * (2 + rng.below(3));
    const std::size_t levels = 1 + rng.below(2);
    const std::size_t points = 1 + rng.below(4);
    const std::size_t n = 1 + rng.below(8);
    DeformParams p = DeformParams::random(dim, heads, levels, points, rng.fork("params"));
    // Large offsets push samples across borders and off the map.
    p.offset = random_linear(dim, p.offset.out_dim(), rng.fork("offset"), 2.0);
    randomize_bias(p.offset, rng, 1.5);
    randomize_bias(p.weight, rng, 0.5);
    randomize_bias(p.value, rng, 0.5);
    randomize_bias(p.output, rng, 0.5);
    std::vector<FeatureMap> maps;
    for (std::size_t l = 0; l < levels; ++l) {
      maps.push_back(random_map(1 + rng.below(8), 1 + rng.below(8), dim, rng));
    }
    const Tensor2D q = random_tensor(n, dim, rng);
    ReferencePoints refs(n);
    for (Point2& r : refs) r = {rng.uniform(), rng.uniform()};

    DeformParams fast = p;
    if (fault == Fault::deform_offset) {
      for (double& w : fast.offset.weight.data()) w *= 1.5;
      for (double& b : fast.offset.bias) b *= 1.5;
    }
    worst = std::max(worst, max_abs_diff(deform_attention(q, refs, maps, fast),
                                         reference::brute_force_deform_oracle(q, refs, maps, p)));
  }
  return worst;
}

double calibration_gradient_max_rel_err(std::uint64_t seed, std::size_t instances, Fault fault) {
  Rng rng(seed, "verify/calibration");
  double worst = 0.0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = 5, c = 3;
    CalibrationConfig cfg;
    cfg.alpha = rng.uniform(0.1, 1.0);
    cfg.gamma = rng.uniform(1.5, 3.0);
    std::vector<double> loc(n);
    std::vector<std::size_t> target(n);
    for (std::size_t i = 0; i < n; ++i) {
      loc[i] = rng.uniform(0.05, 0.95);
      target[i] = rng.below(4) == 0 ? kUnmatched : rng.below(c);
    }
    Tensor2D sigma(n, c);
    for (double& s : sigma.data()) s = rng.uniform(0.02, 0.98);

    CalibrationResult r = calibration_loss(sigma, loc, target, cfg);
    if (fault == Fault::grad_sign) {
      for (double& g : r.grad.data()) g = -g;
    }
    const auto f = [&](std::span<const double> x) {
      Tensor2D s(n, c, std::vector<double>(x.begin(), x.end()));
      return calibration_loss(s, loc, target, cfg).loss;
    };
    const std::vector<double> numeric = finite_diff_grad(f, sigma.data(), 1e-6);
    // Norm-wise: entries near a zero crossing sit at the finite-difference
    // rounding floor and would dominate an elementwise ratio.
    double diff = 0.0, na = 0.0, nn = 0.0;
    for (std::size_t k = 0; k < numeric.size(); ++k) {
      const double a = r.grad.data()[k];
      diff += (a - numeric[k]) * (a - numeric[k]);
      na += a * a;
      nn += numeric[k] * numeric[k];
    }
    worst = std::max(worst, std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-300}));
  }
  return worst;
}

std::size_t matching_mismatches(std::uint64_t seed, std::size_t instances) {
  Rng rng(seed, "verify/matching");
  std::size_t bad = 0;
  for (std::size_t t = 0; t < instances; ++t) {
    const std::size_t n = 1 + rng.below(6);
    const std::size_t m = 1 + rng.below(6);
    Tensor2D cost(n, m);
    for (double& v : cost.data()) v = rng.uniform(-2.0, 0.0);
    const std::vector<std::size_t> a = min_cost_assignment(cost);
    std::size_t pairs = 0;
    std::vector<bool> used(m, false);
    bool valid = true;
    for (std::size_t col : a) {
      if (col == kUnmatched) continue;
      valid = valid && col < m && !used[col];
      if (col < m) used[col] = true;
      ++pairs;
    }
    const double expect = reference::brute_force_assignment_cost(cost);
    if (!valid || pairs != std::min(n, m) || std::abs(assignment_cost(cost, a) - expect) > 1e-12) {
      ++bad;
    }
  }
  return bad;
}

std::vector<CheckResult> gradient_checks(std::uint64_t seed, Fault fault) {
  std::vector<CheckResult> out;
  const double err = calibration_gradient_max_rel_err(seed, 50, fault);
  out.push_back({"calibration gradient vs finite differences", err < 1e-5,
                 "max rel err " + sci(err) + " (limit 1e-5)"});

  CalibrationConfig cfg;
  bool zero_ok = true, min_ok = true;
  for (double loc : {0.1, 0.3, 0.5, 0.7, 0.9}) {
    zero_ok = zero_ok && calibration_term(loc, loc, true, cfg).value == 0.0;
    double best = std::numeric_limits<double>::infinity(), arg = 0.0;
    for (int k = 1; k < 1000; ++k) {
      const double s = k * 1e-3;
      const double v = calibration_term(s, loc, true, cfg).value;
      if (v < best) {
        best = v;
        arg = s;
      }
    }
    min_ok = min_ok && std::abs(arg - loc) <= 1e-3 + 1e-12;
  }
  out.push_back({"matched term vanishes at sigma = IoU", zero_ok, zero_ok ? "exact zero" : "nonzero"});
  out.push_back({"matched term minimised at sigma = IoU", min_ok, "grid step 1e-3"});
  return out;
}

std::vector<CheckResult> run_verify(std::uint64_t seed, Fault fault) {
  std::vector<CheckResult> out;
  Rng rng(seed, "verify");

  {
    double worst = 0.0;
    for (int t = 0; t < 20; ++t) {
      const Tensor2D x = random_tensor(1 + rng.below(40), 1 + rng.below(40), rng);
      Linear l = random_linear(x.cols(), 1 + rng.below(40), rng.fork("l"));
      randomize_bias(l, rng, 1.0);
      worst = std::max(worst, max_abs_diff(linear(x, l), reference::matmul_bias(x, l.weight, l.bias)));
    }
    out.push_back(below("linear vs loop matmul", worst, 1e-12));
  }
  {
    double worst = 0.0;
    for (int t = 0; t < 50; ++t) {
      const FeatureMap m = random_map(1 + rng.below(8), 1 + rng.below(8), 3, rng);
      const double x = rng.uniform(-0.3, 1.3), y = rng.uniform(-0.3, 1.3);
      const auto a = bilinear_sample(m, x, y);
      const auto b = reference::bilinear_sample(m, x, y);
      for (std::size_t c = 0; c < a.size(); ++c) worst = std::max(worst, std::abs(a[c] - b[c]));
    }
    out.push_back(below("bilinear sample vs loop oracle", worst, 1e-12));
  }
  {
    const Tensor2D x = random_tensor(16, 64, rng, 3.0);
    const NormAffine id = NormAffine::identity(64);
    out.push_back(below("group norm vs loop oracle",
                        max_abs_diff(group_norm(x, 32, 1e-6, id),
                                     reference::group_norm(x, 32, 1e-6, id.gain, id.shift)),
                        1e-12));
  }
  {
    const AttentionParams p = AttentionParams::random(16, 4, rng.fork("attn"));
    const Tensor2D q = random_tensor(7, 16, rng), ctx = random_tensor(11, 16, rng);
    out.push_back(below("cross attention vs loop oracle",
                        max_abs_diff(cross_attention(q, ctx, p), reference::cross_attention(q, ctx, p)),
                        1e-12));
  }
  {
    // The fusion block is two cross-attentions tied through the shared projections.
    const BiAttentionParams b = BiAttentionParams::random(16, 4, rng.fork("bi"));
    const Tensor2D img = random_tensor(9, 16, rng), txt = random_tensor(5, 16, rng);
    const BiAttentionResult r = bi_attention(img, img, txt, b);
    const AttentionParams to_text{16, 4, b.image_query, b.text_key, b.text_value, b.image_output};
    const AttentionParams to_image{16, 4, b.text_key, b.image_query, b.image_value, b.text_output};
    const double d1 = max_abs_diff(r.image_update, reference::cross_attention(img, txt, to_text));
    const double d2 = max_abs_diff(r.text_update, reference::cross_attention(txt, img, to_image));
    out.push_back(below("fusion attention vs tied cross attention", std::max(d1, d2), 1e-12));
  }
  out.push_back(below("deformable attention vs brute-force oracle",
                      deform_oracle_max_diff(seed, 100, fault), 1e-10));

  for (CheckResult& c : gradient_checks(seed, fault)) out.push_back(std::move(c));

  {
    bool ok = true;
    std::string why = "3 kinds x 60 parameter draws";
    for (int t = 0; t < 60 && ok; ++t) {
      PruneSchedule s;
      s.b_low = rng.uniform(0.0, 0.5);
      s.b_high = rng.uniform(s.b_low, 1.0);
      s.layers = 2 + rng.below(12);
      for (ScheduleKind k : {ScheduleKind::sigmoid, ScheduleKind::exponential, ScheduleKind::logarithmic}) {
        s.kind = k;
        s.steepness = rng.uniform(0.1, 6.0);
        double prev = -1.0;
        for (std::size_t l = 0; l < s.layers; ++l) {
          const double tau = threshold_at(s, l);
          if (tau < s.b_low - 1e-12 || tau > s.b_high + 1e-12 || tau < prev - 1e-12) {
            ok = false;
            why = to_string(k) + " schedule leaves its bounds or decreases at layer " + std::to_string(l);
          }
          prev = tau;
        }
      }
    }
    out.push_back({"threshold schedules monotone and bounded", ok, why});
  }
  {
    const std::size_t bad = matching_mismatches(seed, 100);
    out.push_back({"assignment vs exhaustive enumeration", bad == 0,
                   std::to_string(bad) + " of 100 instances differ"});
  }
  {
    std::size_t bad = 0;
    for (int t = 0; t < 100; ++t) {
      const std::size_t n = 1 + rng.below(40);
      QuerySet q;
      q.confidence.resize(n);
      q.active.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        // Coarse values so ties occur.
        q.confidence[i] = std::round(rng.uniform() * 20.0) / 20.0;
        q.active[i] = rng.below(5) != 0;
      }
      const double tau = rng.uniform();
      const std::size_t keep = rng.below(n + 1);
      const std::vector<bool> expect = reference::prune_loop(q.confidence, q.active, tau, keep);
      prune(q, tau, keep);
      bad += q.active == expect ? 0 : 1;
    }
    out.push_back({"prune vs filter-then-floor loop", bad == 0, std::to_string(bad) + " of 100 trials differ"});
  }
  {
    QuerySet q;
    q.features = random_tensor(4, 8, rng);
    q.active = {true, false, true, true};
    const FeatureMap m = random_map(6, 5, 8, rng);
    const MaskSet masks = predict_masks(q, m);
    double worst = masks.size() == 3 ? 0.0 : std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < masks.size(); ++k) {
      worst = std::max(worst, max_abs_diff(masks.logits[k],
                                           reference::mask_logits(q.features.row(masks.queries[k]), m)));
    }
    out.push_back(below("mask logits vs loop oracle", worst, 1e-12));
  }
  return out;
}

}  // namespace bseg
