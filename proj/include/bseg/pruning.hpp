#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bseg/queries.hpp"

namespace bseg {

enum class ScheduleKind { sigmoid, exponential, logarithmic };

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

// Layer-indexed confidence threshold rising from b_low to b_high over a
// decoder of `layers` layers. steepness is beta for the sigmoid and alpha for
// the exponential and logarithmic curves.
struct PruneSchedule {
  ScheduleKind kind = ScheduleKind::sigmoid;
  double b_low = 0.05;
  double b_high = 0.2;
  double steepness = 1.0;
  std::size_t layers = 9;
  std::size_t min_keep = 100;

  void validate() const;
};

inline constexpr double kDefaultCurveAlpha = 4.0;

// l is 0-based, l in [0, layers).
double threshold_at(const PruneSchedule& schedule, std::size_t layer);

struct PruneEvent {
  std::size_t layer = 0;
  std::size_t query = 0;
  double confidence = 0.0;
  double threshold = 0.0;
};

struct PruneOutcome {
  std::vector<std::size_t> removed;
  // Active queries below the threshold that the min_keep floor kept alive.
  std::size_t kept_by_floor = 0;
};

// Deactivates active queries whose confidence is below tau. If fewer than
// min_keep would survive, the min_keep most confident active queries survive
// instead (ties go to the lower index). Never activates a query.
PruneOutcome prune(QuerySet& queries, double tau, std::size_t min_keep);

enum class BaselineStrategy { layers, random, topk };

std::string to_string(BaselineStrategy strategy);
BaselineStrategy baseline_strategy_from_string(const std::string& name);

// Baseline pruning to `budget` active queries. `layers` leaves the set
// untouched (its savings come from running fewer decoder layers); `random`
// deactivates uniformly at random with the given seed; `topk` keeps the
// budget most confident queries.
std::vector<std::size_t> baseline_prune(QuerySet& queries, BaselineStrategy strategy,
                                        std::size_t budget, std::uint64_t seed);

// Indices of the k largest values, ties broken by lower index, in ranked order.
std::vector<std::size_t> top_k_indices(const std::vector<double>& values,
                                       const std::vector<std::size_t>& candidates, std::size_t k);

}  // namespace bseg
