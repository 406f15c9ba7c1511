#include "lkreg/analysis.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

namespace lkreg {

namespace {

index_t ipow(index_t base, int e) {
  index_t r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

struct BranchCounts {
  index_t params = 0;
  index_t weight_macs_per_voxel = 0;  // multiply by output spatial numel
};

BranchCounts conv_counts(index_t cin, index_t cout, index_t kernel, int dims,
                         bool bias) {
  BranchCounts b;
  const index_t kvol = ipow(kernel, dims);
  b.params = cin * cout * kvol + (bias ? cout : 0);
  b.weight_macs_per_voxel = cin * cout * kvol;
  return b;
}

BranchCounts layer_counts(const LayerPlan& l, int dims) {
  BranchCounts total;
  switch (l.kind) {
    case LayerKind::conv:
    case LayerKind::head: {
      total = conv_counts(l.cin, l.cout, l.kernel, dims, l.bias);
      break;
    }
    case LayerKind::tconv: {
      total = conv_counts(l.cin, l.cout, 2, dims, l.bias);
      break;
    }
    case LayerKind::lk_block: {
      const bool large = l.branches.large && l.kernel > 3;
      if (large) {
        const auto b = conv_counts(l.cin, l.cout, l.kernel, dims, true);
        total.params += b.params;
        total.weight_macs_per_voxel += b.weight_macs_per_voxel;
      }
      if (l.branches.three) {
        const auto b = conv_counts(l.cin, l.cout, 3, dims, true);
        total.params += b.params;
        total.weight_macs_per_voxel += b.weight_macs_per_voxel;
      }
      if (l.branches.one) {
        const auto b = conv_counts(l.cin, l.cout, 1, dims, true);
        total.params += b.params;
        total.weight_macs_per_voxel += b.weight_macs_per_voxel;
      }
      break;
    }
  }
  if (l.prelu) total.params += 1;
  return total;
}

const char* kind_name(LayerKind k) {
  switch (k) {
    case LayerKind::conv:
      return "conv";
    case LayerKind::lk_block:
      return "lk_block";
    case LayerKind::tconv:
      return "tconv";
    case LayerKind::head:
      return "head";
  }
  return "?";
}

void check_extents(const NetConfig& cfg, const std::vector<index_t>& spatial) {
  if (static_cast<int>(spatial.size()) != cfg.dims)
    throw config_error("analysis: expected " + std::to_string(cfg.dims) +
                       " spatial extents, got " +
                       std::to_string(spatial.size()));
  const index_t div = cfg.spatial_divisor();
  for (index_t e : spatial)
    if (e < div || e % div != 0)
      throw config_error("analysis: extents must be multiples of " +
                         std::to_string(div));
}

}  // namespace

void Rational::reduce() {
  const long long g = std::gcd(num, den);
  if (g > 0) {
    num /= g;
    den /= g;
  }
}

Rational kernel_growth_ratio(index_t k_from, index_t k_to, int dims) {
  if (k_from < 1 || k_to < 1 || k_from % 2 == 0 || k_to % 2 == 0)
    throw config_error("kernel_growth_ratio: kernels must be odd positive");
  Rational r;
  r.num = static_cast<long long>(ipow(k_to, dims));
  r.den = static_cast<long long>(ipow(k_from, dims));
  r.reduce();
  return r;
}

index_t count_parameters(const NetConfig& cfg) {
  index_t total = 0;
  for (const LayerPlan& l : plan_layers(cfg))
    total += layer_counts(l, cfg.dims).params;
  return total;
}

index_t count_mult_adds(const NetConfig& cfg,
                        const std::vector<index_t>& input_spatial) {
  check_extents(cfg, input_spatial);
  const index_t full = std::accumulate(input_spatial.begin(),
                                       input_spatial.end(), index_t(1),
                                       std::multiplies<>());
  index_t total = 0;
  for (const LayerPlan& l : plan_layers(cfg)) {
    const index_t out_numel = full / ipow(l.scale, cfg.dims);
    total += layer_counts(l, cfg.dims).weight_macs_per_voxel * out_numel;
  }
  return total;
}

std::vector<index_t> receptive_field(const NetConfig& cfg) {
  // Walks the plan keeping the input-grid spacing (jump) of the current
  // feature map; a kernel-2 stride-2 transposed conv adds nothing (each
  // output draws on exactly one input sample) and halves the jump.
  double r = 1.0, jump = 1.0;
  for (const LayerPlan& l : plan_layers(cfg)) {
    switch (l.kind) {
      case LayerKind::conv:
      case LayerKind::head:
        r += static_cast<double>(l.kernel - 1) * jump;
        jump *= static_cast<double>(l.stride);
        break;
      case LayerKind::lk_block: {
        index_t keff = 1;
        if (l.branches.large && l.kernel > 3) keff = l.kernel;
        if (l.branches.three) keff = std::max<index_t>(keff, 3);
        r += static_cast<double>(keff - 1) * jump;
        break;
      }
      case LayerKind::tconv:
        jump /= static_cast<double>(l.stride);
        break;
    }
  }
  return std::vector<index_t>(static_cast<std::size_t>(cfg.dims),
                              static_cast<index_t>(std::llround(r)));
}

index_t receptive_field_walk(
    const std::vector<std::pair<index_t, index_t>>& kernel_stride) {
  index_t r = 1, jump = 1;
  for (const auto& [k, s] : kernel_stride) {
    r += (k - 1) * jump;
    jump *= s;
  }
  return r;
}

ComplexityReport analyze_network(const NetConfig& cfg,
                                 const std::vector<index_t>& input_spatial) {
  check_extents(cfg, input_spatial);
  ComplexityReport rep;
  const index_t full = std::accumulate(input_spatial.begin(),
                                       input_spatial.end(), index_t(1),
                                       std::multiplies<>());
  for (const LayerPlan& l : plan_layers(cfg)) {
    const BranchCounts c = layer_counts(l, cfg.dims);
    LayerReport lr;
    lr.name = l.name;
    lr.kind = kind_name(l.kind);
    lr.cin = l.cin;
    lr.cout = l.cout;
    lr.kernel = l.kind == LayerKind::tconv ? 2 : l.kernel;
    lr.stride = l.stride;
    lr.params = c.params;
    for (index_t e : input_spatial) lr.out_extents.push_back(e / l.scale);
    const index_t out_numel = full / ipow(l.scale, cfg.dims);
    lr.mult_adds = c.weight_macs_per_voxel * out_numel;
    rep.parameter_count += lr.params;
    rep.mult_adds += lr.mult_adds;
    rep.layers.push_back(std::move(lr));
  }
  rep.receptive_field = receptive_field(cfg);
  return rep;
}

std::string format_giga(index_t mult_adds) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f",
                static_cast<double>(mult_adds) / 1e9);
  return buf;
}

}  // namespace lkreg
