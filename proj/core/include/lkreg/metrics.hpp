#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lkreg/network.hpp"

namespace lkreg {

// Non-differentiable evaluation metrics. Label maps are integer-valued
// tensors of shape [1, 1, spatial...] with 0 as background.

// Sorted unique non-zero labels.
std::vector<int> label_vocabulary(const TensorF& labels);

// One membership channel per vocabulary entry: [1, L, spatial...].
TensorF one_hot(const TensorF& labels, const std::vector<int>& vocabulary);

struct DiceResult {
  std::vector<int> labels;
  // NaN marks labels empty in both maps (excluded from the mean).
  std::vector<double> per_label;
  double mean = 0.0;
};

// Per label: 2|A∩B| / (|A|+|B|); labels empty in both maps are excluded
// from the mean, labels empty in exactly one score 0.
DiceResult dice(const TensorF& a, const TensorF& b,
                const std::vector<int>& vocabulary);

// 95th percentile (linear-interpolated) of the symmetric set of
// boundary-to-boundary nearest Euclidean distances, voxel spacing 1.
// Boundary voxels have at least one background face-neighbor (the outside
// of the volume counts as background). Empty masks give no value.
std::optional<double> hausdorff95(const TensorF& a, const TensorF& b,
                                  int label);

// Linear-interpolated percentile of an unsorted sample, p in [0, 100].
double percentile(std::vector<double> values, double p);

struct DisplacementStats {
  std::vector<double> mean_abs;  // per axis, voxel units
};

DisplacementStats displacement_statistics(const std::vector<TensorF>& fields);

// Plain-text rows "x y ux uy" (2D) or "x y z ux uy uz" (3D) on a stride.
void write_quiver(const std::string& path, const TensorF& field,
                  index_t stride);

struct MetricsRecord {
  std::string pair_id;
  std::string checkpoint_id;
  std::uint64_t config_hash = 0;
  std::vector<int> labels;
  std::vector<double> dice_per_label;
  double dice_mean = 0.0;
  bool has_dice = false;
  double fold_pct = 0.0;
  double sdlogj = 0.0;
  std::vector<double> hd95_per_label;  // NaN = missing
  double hd95_mean = 0.0;
  bool has_hd95 = false;
  double runtime_ms = 0.0;
};

struct EvaluationArtifacts {
  MetricsRecord record;
  TensorF field;
  TensorF warped;
  std::optional<TensorF> warped_labels;
};

// Runs inference on a stacked pair, warps image (linear) and labels
// (nearest), and computes Dice, fold fraction, SDlogJ and HdDist95.
EvaluationArtifacts evaluate_pair(const Network<float>& net,
                                  const TensorF& fixed, const TensorF& moving,
                                  const std::optional<TensorF>& fixed_labels,
                                  const std::optional<TensorF>& moving_labels,
                                  const std::string& pair_id,
                                  const std::string& checkpoint_id);

// CSV header: pair_id,dice_mean,dice_<l>...,fold_pct,sdlogj,hd95_mean,runtime_ms
std::string metrics_csv_header(const std::vector<int>& vocabulary);
std::string metrics_csv_row(const MetricsRecord& r);

}  // namespace lkreg
