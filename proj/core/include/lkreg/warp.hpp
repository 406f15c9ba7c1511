#pragma once

#include "lkreg/graph.hpp"

namespace lkreg {

// Spatial warping and stationary-velocity-field exponentiation.
//
// A displacement field u is a [1, D, spatial...] tensor, D in {2,3};
// channel d holds the offset along spatial axis d in voxel units, the
// first spatial axis first. warp(I, u)(x) = I(x + u(x)) with border-clamped
// sampling.

enum class WarpMode { linear, nearest };

template <class T>
Tensor<T> warp_linear_forward(const Tensor<T>& image, const Tensor<T>& disp);

template <class T>
Tensor<T> warp_nearest(const Tensor<T>& image, const Tensor<T>& disp);

// Accumulates into grad_image / grad_disp when non-null.
template <class T>
void warp_linear_vjp(const Tensor<T>& image, const Tensor<T>& disp,
                     const Tensor<T>& grad_out, Tensor<T>* grad_image,
                     Tensor<T>* grad_disp);

// Differentiable in linear mode; requesting nearest while recording
// gradients is a usage error (nearest is for label maps only).
template <class T>
Var<T> warp(Graph<T>* g, const Var<T>& image, const Var<T>& disp,
            WarpMode mode = WarpMode::linear);

// Scaling and squaring: u <- v / 2^steps, then u <- u + u o (id + u)
// `steps` times. Differentiable end to end; returns Exp(v) - id.
template <class T>
Var<T> exp_velocity(Graph<T>* g, const Var<T>& v, int steps = 7);

template <class T>
Tensor<T> exp_velocity_tensor(const Tensor<T>& v, int steps = 7);

// Per-voxel det(I + du/dx); central differences in the interior, one-sided
// at borders. Output shape [1, 1, spatial...].
template <class T>
Tensor<T> jacobian_determinant(const Tensor<T>& disp);

// 100 * |{x : det(x) <= 0}| / |grid|.
template <class T>
double fold_fraction(const Tensor<T>& disp);

// Standard deviation over voxels of log(max(det, 1e-6)).
template <class T>
double sd_log_jacobian(const Tensor<T>& disp);

double sd_log_jacobian_of_dets(const std::vector<double>& dets);

}  // namespace lkreg
