#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bseg/errors.hpp"
#include "bseg/pruning.hpp"
#include "bseg/reference.hpp"
#include "bseg/rng.hpp"

using namespace bseg;

namespace {

QuerySet with_confidence(std::vector<double> conf) {
  QuerySet q;
  q.confidence = std::move(conf);
  q.active.assign(q.confidence.size(), true);
  q.scores = q.confidence;
  q.boxes.resize(q.confidence.size());
  q.origin.resize(q.confidence.size());
  return q;
}

QuerySet random_queries(Rng& rng, std::size_t n) {
  std::vector<double> c(n);
  for (double& v : c) v = rng.uniform();
  return with_confidence(c);
}

PruneSchedule schedule(ScheduleKind kind, double lo, double hi, double k, std::size_t layers) {
  PruneSchedule s;
  s.kind = kind;
  s.b_low = lo;
  s.b_high = hi;
  s.steepness = k;
  s.layers = layers;
  return s;
}

}  // namespace

TEST_SUITE("pruning") {

TEST_CASE("threshold examples") {
  CHECK(std::fabs(threshold_at(schedule(ScheduleKind::sigmoid, 0.05, 0.2, 1.0, 6), 3) - 0.125) < 1e-15);

  auto e = schedule(ScheduleKind::exponential, 0.05, 0.2, kDefaultCurveAlpha, 9);
  CHECK(threshold_at(e, 0) == 0.05);
  CHECK(threshold_at(e, 8) == 0.2);

  auto lg = schedule(ScheduleKind::logarithmic, 0.0, 1.0, 1.0, 6);
  CHECK(threshold_at(lg, 5) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(threshold_at(lg, 0) == 0.0);
}

TEST_CASE("threshold errors") {
  auto s = schedule(ScheduleKind::sigmoid, 0.05, 0.2, 1.0, 6);
  CHECK_THROWS_AS(threshold_at(s, 6), ConfigError);
  CHECK_THROWS_AS(threshold_at(schedule(ScheduleKind::exponential, 0, 1, 4, 1), 0), ConfigError);
  CHECK_THROWS_AS(threshold_at(schedule(ScheduleKind::logarithmic, 0, 1, 4, 1), 0), ConfigError);
  CHECK_NOTHROW(threshold_at(schedule(ScheduleKind::sigmoid, 0, 1, 4, 1), 0));
  CHECK_THROWS_AS(schedule(ScheduleKind::sigmoid, 0.3, 0.2, 1, 6).validate(), ConfigError);
  CHECK_THROWS_AS(schedule(ScheduleKind::sigmoid, -0.1, 0.2, 1, 6).validate(), ConfigError);
  CHECK_THROWS_AS(schedule_kind_from_string("cubic"), ConfigError);
}

TEST_CASE("thresholds are non-decreasing and bounded") {
  Rng rng(1, "sched");
  for (int t = 0; t < 200; ++t) {
    const auto kind = static_cast<ScheduleKind>(t % 3);
    double lo = rng.uniform(), hi = rng.uniform();
    if (lo > hi) std::swap(lo, hi);
    const std::size_t layers = 2 + rng.below(15);
    auto s = schedule(kind, lo, hi, rng.uniform(0.05, 8.0), layers);
    double prev = -INFINITY;
    for (std::size_t l = 0; l < layers; ++l) {
      const double tau = threshold_at(s, l);
      CHECK(tau >= prev - 1e-12);
      CHECK(tau >= lo - 1e-12);
      CHECK(tau <= hi + 1e-12);
      prev = tau;
    }
  }
}

TEST_CASE("a tiny exponential steepness falls back to the straight line") {
  auto s = schedule(ScheduleKind::exponential, 0.0, 1.0, 1e-14, 5);
  CHECK(std::fabs(threshold_at(s, 2) - 0.5) < 1e-12);
}

TEST_CASE("prune examples") {
  Rng rng(2, "prune-ex");
  QuerySet q = random_queries(rng, 20);
  QuerySet same = q;
  auto out = prune(same, 0.0, 5);
  CHECK(out.removed.empty());
  CHECK(same.active == q.active);

  auto floor = prune(q, 1.0, 5);
  CHECK(q.active_count() == 5);
  CHECK(floor.kept_by_floor == 5);
  std::vector<double> sorted = q.confidence;
  std::sort(sorted.rbegin(), sorted.rend());
  for (std::size_t i : q.active_indices()) CHECK(q.confidence[i] >= sorted[4]);
}

TEST_CASE("prune ties at the floor go to the lower index") {
  QuerySet q = with_confidence({0.3, 0.5, 0.3, 0.3, 0.1});
  prune(q, 0.9, 2);
  CHECK(q.active == std::vector<bool>{true, true, false, false, false});
}

TEST_CASE("prune matches the filter-then-floor loop") {
  Rng rng(3, "prune-oracle");
  for (int t = 0; t < 100; ++t) {
    QuerySet q = random_queries(rng, 1 + rng.below(40));
    for (std::size_t i = 0; i < q.size(); ++i)
      if (rng.uniform() < 0.2) q.active[i] = false;
    if (t % 5 == 0)
      for (double& c : q.confidence) c = std::round(c * 4.0) / 4.0;  // plenty of ties
    const double tau = rng.uniform();
    const std::size_t min_keep = rng.below(20);
    auto expect = reference::prune_loop(q.confidence, q.active, tau, min_keep);
    prune(q, tau, min_keep);
    CHECK(q.active == expect);
  }
}

TEST_CASE("prune never reactivates and is idempotent") {
  Rng rng(4, "prune-idem");
  for (int t = 0; t < 30; ++t) {
    QuerySet q = random_queries(rng, 30);
    q.active[0] = false;
    const double tau = rng.uniform(0.2, 0.8);
    prune(q, tau, 6);
    CHECK_FALSE(q.active[0]);
    auto once = q.active;
    prune(q, tau, 6);
    CHECK(q.active == once);
  }
}

TEST_CASE("baselines") {
  Rng rng(5, "baseline");
  QuerySet q = random_queries(rng, 30);

  QuerySet t = q;
  CHECK(baseline_prune(t, BaselineStrategy::topk, 30, 0).empty());
  CHECK(t.active == q.active);

  QuerySet a = q, b = q;
  auto ra = baseline_prune(a, BaselineStrategy::random, 12, 99);
  auto rb = baseline_prune(b, BaselineStrategy::random, 12, 99);
  CHECK(ra == rb);
  CHECK(a.active == b.active);
  CHECK(a.active_count() == 12);
  CHECK(std::is_sorted(ra.begin(), ra.end()));

  QuerySet c = q;
  baseline_prune(c, BaselineStrategy::random, 12, 100);
  CHECK(c.active != a.active);

  QuerySet k = q;
  baseline_prune(k, BaselineStrategy::topk, 10, 0);
  CHECK(k.active_count() == 10);
  double min_kept = 1.0, max_dropped = 0.0;
  for (std::size_t i = 0; i < 30; ++i) {
    if (k.active[i]) min_kept = std::min(min_kept, q.confidence[i]);
    else max_dropped = std::max(max_dropped, q.confidence[i]);
  }
  CHECK(min_kept >= max_dropped);

  QuerySet l = q;
  CHECK(baseline_prune(l, BaselineStrategy::layers, 10, 0).empty());
  CHECK(l.active_count() == 30);

  QuerySet e = q;
  CHECK_THROWS_AS(baseline_prune(e, BaselineStrategy::topk, 31, 0), ConfigError);
  CHECK_THROWS_AS(baseline_strategy_from_string("greedy"), ConfigError);
}

TEST_CASE("top k indices") {
  std::vector<double> v{0.9, 0.1, 0.5, 0.7, 0.5};
  CHECK(top_k_indices(v, {0, 1, 2, 3, 4}, 3) == std::vector<std::size_t>{0, 3, 2});
  CHECK(top_k_indices(v, {1, 2, 4}, 2) == std::vector<std::size_t>{2, 4});
}

}
