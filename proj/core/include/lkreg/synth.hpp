#pragma once

#include "lkreg/rng.hpp"
#include "lkreg/tensor.hpp"

namespace lkreg {

// Procedural desk-scale registration pairs: smoothed-blob anatomy with
// nested ring structures and a four-structure label map. The moving image
// is the fixed image warped by Exp(-v) for a random smooth velocity v, so
// Exp(v) is the ground-truth field a registration should recover.

struct SynthConfig {
  std::uint64_t seed = 1;
  int count = 1;
  std::vector<index_t> extents;  // spatial, size 2 or 3
  double max_disp = 4.0;

  void validate() const;
};

struct SynthPair {
  std::string id;
  TensorF fixed;          // [1,1,spatial], intensities in [0,1]
  TensorF moving;         // [1,1,spatial]
  TensorF fixed_labels;   // [1,1,spatial], labels 0..4
  TensorF moving_labels;  // [1,1,spatial]
  TensorF gt_field;       // [1,D,spatial] = Exp(v) - id
};

// Separable Gaussian smoothing over the spatial dims of a [B,C,...] tensor,
// truncated at 3 sigma, zero padding.
TensorF gaussian_smooth(const TensorF& x, double sigma);

SynthPair make_synth_pair(Rng rng, const std::vector<index_t>& extents,
                          double max_disp);

std::vector<SynthPair> synth_dataset(const SynthConfig& cfg);

// Writes pair_NNNN/{fixed,moving,fixed_labels,moving_labels,gt_field}.tns
void write_synth_dataset(const SynthConfig& cfg, const std::string& out_dir);

}  // namespace lkreg
