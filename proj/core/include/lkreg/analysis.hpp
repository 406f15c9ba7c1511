#pragma once

#include "lkreg/network.hpp"

namespace lkreg {

// Analytic model complexity: exact parameter and mult-add counts plus the
// theoretical receptive field, all computed from the layer plan without
// materializing weights.
//
// Conventions: one fused multiply-add per weight application, conv and
// transposed-conv layers only (biases, branch additions and activations
// excluded); transposed convs counted at their output resolution.

struct Rational {
  long long num = 0;
  long long den = 1;
  void reduce();
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
  bool operator==(const Rational& o) const {
    return num == o.num && den == o.den;
  }
};

// (k_to / k_from)^dims as an exact reduced rational.
Rational kernel_growth_ratio(index_t k_from, index_t k_to, int dims);

struct LayerReport {
  std::string name;
  std::string kind;
  index_t cin = 0;
  index_t cout = 0;
  index_t kernel = 0;
  index_t stride = 1;
  index_t params = 0;
  index_t mult_adds = 0;
  std::vector<index_t> out_extents;
};

struct ComplexityReport {
  index_t parameter_count = 0;
  index_t mult_adds = 0;
  std::vector<index_t> receptive_field;
  std::vector<LayerReport> layers;
};

index_t count_parameters(const NetConfig& cfg);
index_t count_mult_adds(const NetConfig& cfg,
                        const std::vector<index_t>& input_spatial);
std::vector<index_t> receptive_field(const NetConfig& cfg);

ComplexityReport analyze_network(const NetConfig& cfg,
                                 const std::vector<index_t>& input_spatial);

// r = 1 + sum_i (k_i - 1) * prod_{j<i} s_j over a plain layer sequence.
index_t receptive_field_walk(
    const std::vector<std::pair<index_t, index_t>>& kernel_stride);

// Mult-adds in units of 1e9, formatted with two decimals ("58.73").
std::string format_giga(index_t mult_adds);

}  // namespace lkreg
