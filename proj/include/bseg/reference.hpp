#pragma once

// Serial, loop-only implementations kept as oracles for the parallel kernels.
// They share no code with the fast paths beyond the data containers.

#include <span>
#include <vector>

#include "bseg/attention.hpp"
#include "bseg/queries.hpp"
#include "bseg/tensor.hpp"

namespace bseg::reference {

Tensor2D matmul_bias(const Tensor2D& input, const Tensor2D& weight, std::span<const double> bias);

std::vector<double> bilinear_sample(const FeatureMap& map, double x, double y);

Tensor2D group_norm(const Tensor2D& tokens, std::size_t groups, double eps,
                    std::span<const double> gain, std::span<const double> shift);

Tensor2D cross_attention(const Tensor2D& queries, const Tensor2D& context,
                         const AttentionParams& params);

// Same contract as deform_attention. Every sampled neighbor is projected on
// the fly from the raw value map, so nothing is batched or cached.
Tensor2D brute_force_deform_oracle(const Tensor2D& queries, const ReferencePoints& refs,
                                   std::span<const FeatureMap> value_maps,
                                   const DeformParams& params);

// Minimum total cost over every one-to-one assignment of min(rows, cols)
// pairs, by enumeration. Only for small matrices.
double brute_force_assignment_cost(const Tensor2D& cost);

// Filter below tau, then fall back to the min_keep most confident; returns
// the surviving active flags.
std::vector<bool> prune_loop(const std::vector<double>& confidence, const std::vector<bool>& active,
                             double tau, std::size_t min_keep);

// Per-pixel dot product of one query with the map, as a height x width matrix.
Tensor2D mask_logits(std::span<const double> query, const FeatureMap& map);

}  // namespace bseg::reference
