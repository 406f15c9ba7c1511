#pragma once

#include "lkreg/graph.hpp"

namespace lkreg {

struct LossConfig {
  double lambda = 1.0;       // regularization weight
  index_t ncc_window = 9;    // window extent per spatial dim, odd
  double ncc_epsilon = 1e-5;
  double dice_weight = 0.0;
  double dice_epsilon = 1e-5;
  enum class RegularizeTarget { displacement, velocity };
  RegularizeTarget regularize_target = RegularizeTarget::displacement;

  void validate() const;
};

// Mean over voxels of the local squared normalized cross-correlation
// cov(I,J)^2 / (var(I) var(J) + eps), window sums zero-padded with a
// constant window count. Value in [0, 1]; invariant to positive affine
// intensity rescaling of either argument. Inputs [1,1,spatial].
template <class T>
Var<T> ncc(Graph<T>* g, const Var<T>& warped, const Var<T>& fixed,
           const LossConfig& cfg);

// Mean over elements of the field of sum-over-axes squared forward
// differences (the difference at the last index of each axis is omitted).
template <class T>
Var<T> diffusion_regularizer(Graph<T>* g, const Var<T>& field);

// 1 - mean over labels of (2 sum(p g) + eps) / (sum p + sum g + eps);
// channels are per-label membership maps in [0, 1].
template <class T>
Var<T> soft_dice_loss(Graph<T>* g, const Var<T>& warped_onehot,
                      const Var<T>& fixed_onehot, double eps);

struct LossBreakdown {
  double total = 0.0;
  double ncc = 0.0;
  double reg = 0.0;
  double dice = 0.0;
  bool has_dice = false;
};

template <class T>
struct RegistrationLoss {
  Var<T> total;
  Var<T> displacement;  // field actually used for warping
  Var<T> warped;
  LossBreakdown parts;
};

// Full objective: -ncc + lambda * diffusion + dice_weight * soft_dice.
// When diffeomorphic, net_out is a velocity field and the warp uses
// Exp(net_out); the regularizer follows cfg.regularize_target. Dice terms
// need one-hot label tensors; requesting dice without them is an error.
template <class T>
RegistrationLoss<T> registration_loss(Graph<T>* g, const Var<T>& net_out,
                                      const Var<T>& moving,
                                      const Var<T>& fixed, bool diffeomorphic,
                                      int squaring_steps,
                                      const LossConfig& cfg,
                                      const Var<T>& moving_onehot = nullptr,
                                      const Var<T>& fixed_onehot = nullptr);

}  // namespace lkreg
