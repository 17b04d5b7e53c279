#include "bseg/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bseg/errors.hpp"
#include "bseg/rng.hpp"

namespace bseg {

std::string to_string(ScheduleKind kind) {
  switch (kind) {
    case ScheduleKind::sigmoid: return "sigmoid";
    case ScheduleKind::exponential: return "exponential";
    case ScheduleKind::logarithmic: return "logarithmic";
  }
  return "?";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
  if (name == "sigmoid") return ScheduleKind::sigmoid;
  if (name == "exponential" || name == "exp") return ScheduleKind::exponential;
  if (name == "logarithmic" || name == "log") return ScheduleKind::logarithmic;
  throw ConfigError("unknown schedule kind '" + name + "'");
}

void PruneSchedule::validate() const {
  if (!(b_low >= 0.0 && b_low <= b_high && b_high <= 1.0)) {
    throw ConfigError("schedule bounds must satisfy 0 <= b_low <= b_high <= 1");
  }
  if (layers == 0) throw ConfigError("schedule needs at least one layer");
  if (!std::isfinite(steepness)) throw ConfigError("schedule steepness must be finite");
  if (kind != ScheduleKind::sigmoid && layers == 1) {
    throw ConfigError(to_string(kind) + " schedule needs at least two layers");
  }
  if (kind == ScheduleKind::logarithmic && !(steepness > 0.0)) {
    throw ConfigError("logarithmic schedule needs alpha > 0");
  }
}

double threshold_at(const PruneSchedule& schedule, std::size_t layer) {
  schedule.validate();
  if (layer >= schedule.layers) {
    throw ConfigError("layer " + std::to_string(layer) + " outside a " +
                      std::to_string(schedule.layers) + "-layer schedule");
  }
  const double span = schedule.b_high - schedule.b_low;
  const double l = static_cast<double>(layer);
  const double total = static_cast<double>(schedule.layers);
  double frac = 0.0;
  switch (schedule.kind) {
    case ScheduleKind::sigmoid:
      frac = 1.0 / (1.0 + std::exp(-(10.0 * schedule.steepness / total) * (l - total / 2.0)));
      break;
    case ScheduleKind::exponential: {
      const double a = schedule.steepness;
      const double t = l / (total - 1.0);
      // alpha -> 0 degenerates to linear interpolation
      frac = std::abs(a) < 1e-12 ? t : std::expm1(a * t) / std::expm1(a);
      break;
    }
    case ScheduleKind::logarithmic: {
      const double a = schedule.steepness;
      frac = std::log1p(a * l / (total - 1.0)) / std::log1p(a);
      break;
    }
  }
  return schedule.b_low + span * frac;
}

std::vector<std::size_t> top_k_indices(const std::vector<double>& values,
                                       const std::vector<std::size_t>& candidates, std::size_t k) {
  std::vector<std::size_t> ranked = candidates;
  k = std::min(k, ranked.size());
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(),
                    [&values](std::size_t a, std::size_t b) {
                      if (values[a] != values[b]) return values[a] > values[b];
                      return a < b;
                    });
  ranked.resize(k);
  return ranked;
}

PruneOutcome prune(QuerySet& queries, double tau, std::size_t min_keep) {
  const std::vector<std::size_t> active = queries.active_indices();
  std::vector<std::size_t> below;
  for (std::size_t i : active) {
    if (queries.confidence[i] < tau) below.push_back(i);
  }
  PruneOutcome outcome;
  if (below.empty()) return outcome;
  if (active.size() - below.size() >= min_keep) {
    for (std::size_t i : below) queries.active[i] = false;
    outcome.removed = std::move(below);
    return outcome;
  }
  const std::vector<std::size_t> keep = top_k_indices(queries.confidence, active, min_keep);
  std::vector<bool> kept(queries.size(), false);
  for (std::size_t i : keep) {
    kept[i] = true;
    if (queries.confidence[i] < tau) ++outcome.kept_by_floor;
  }
  for (std::size_t i : active) {
    if (!kept[i]) {
      queries.active[i] = false;
      outcome.removed.push_back(i);
    }
  }
  return outcome;
}

std::string to_string(BaselineStrategy strategy) {
  switch (strategy) {
    case BaselineStrategy::layers: return "layers";
    case BaselineStrategy::random: return "random";
    case BaselineStrategy::topk: return "topk";
  }
  return "?";
}

BaselineStrategy baseline_strategy_from_string(const std::string& name) {
  if (name == "layers") return BaselineStrategy::layers;
  if (name == "random") return BaselineStrategy::random;
  if (name == "topk") return BaselineStrategy::topk;
  throw ConfigError("unknown baseline strategy '" + name + "'");
}

std::vector<std::size_t> baseline_prune(QuerySet& queries, BaselineStrategy strategy,
                                        std::size_t budget, std::uint64_t seed) {
  std::vector<std::size_t> active = queries.active_indices();
  if (budget > active.size()) {
    throw ConfigError("baseline budget " + std::to_string(budget) + " exceeds " +
                      std::to_string(active.size()) + " active queries");
  }
  std::vector<std::size_t> removed;
  switch (strategy) {
    case BaselineStrategy::layers:
      return removed;
    case BaselineStrategy::random: {
      Rng rng(seed, "baseline/random");
      // Partial Fisher-Yates: the first `budget` slots are the survivors.
      for (std::size_t i = 0; i < budget; ++i) {
        const std::size_t j = i + rng.below(active.size() - i);
        std::swap(active[i], active[j]);
      }
      for (std::size_t i = budget; i < active.size(); ++i) removed.push_back(active[i]);
      break;
    }
    case BaselineStrategy::topk: {
      const std::vector<std::size_t> keep = top_k_indices(queries.confidence, active, budget);
      std::vector<bool> kept(queries.size(), false);
      for (std::size_t i : keep) kept[i] = true;
      for (std::size_t i : active) {
        if (!kept[i]) removed.push_back(i);
      }
      break;
    }
  }
  std::sort(removed.begin(), removed.end());
  for (std::size_t i : removed) queries.active[i] = false;
  return removed;
}

}  // namespace bseg
