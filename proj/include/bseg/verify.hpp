#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace bseg {

// Deliberate bugs the suite must catch.
enum class Fault { none, deform_offset, grad_sign };

Fault fault_from_string(const std::string& name);

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

// Largest |fast - oracle| over random deformable-attention instances with
// N <= 8 queries, <= 2 levels, <= 4 points and maps up to 8x8.
double deform_oracle_max_diff(std::uint64_t seed, std::size_t instances, Fault fault = Fault::none);

// Largest relative error ||analytic - numeric|| / max(||analytic||, ||numeric||)
// of the calibration gradient against central differences (h = 1e-6) over
// random 5x3 instances.
double calibration_gradient_max_rel_err(std::uint64_t seed, std::size_t instances,
                                        Fault fault = Fault::none);

// Number of random instances (<= 6 x 6) where the assignment cost differs
// from exhaustive enumeration.
std::size_t matching_mismatches(std::uint64_t seed, std::size_t instances);

std::vector<CheckResult> gradient_checks(std::uint64_t seed, Fault fault = Fault::none);
std::vector<CheckResult> run_verify(std::uint64_t seed, Fault fault = Fault::none);

}  // namespace bseg
