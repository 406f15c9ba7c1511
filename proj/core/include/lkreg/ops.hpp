#pragma once

#include <array>

#include "lkreg/graph.hpp"

namespace lkreg {

// Elementwise and structural operations with registered backwards.
// Binary ops require identical shapes; there is no broadcasting.

template <class T>
Var<T> add(Graph<T>* g, const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> sub(Graph<T>* g, const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> mul(Graph<T>* g, const Var<T>& a, const Var<T>& b);
template <class T>
Var<T> div(Graph<T>* g, const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> scale(Graph<T>* g, const Var<T>& a, T c);
template <class T>
Var<T> add_scalar(Graph<T>* g, const Var<T>& a, T c);

// slope applies for x <= 0 (the subgradient at 0 uses the negative side).
template <class T>
Var<T> leaky_relu(Graph<T>* g, const Var<T>& a, T slope);

// Parametric variant: alpha is a learnable scalar tensor of shape [1].
template <class T>
Var<T> prelu(Graph<T>* g, const Var<T>& a, const Var<T>& alpha);

template <class T>
Var<T> concat(Graph<T>* g, int axis, const Var<T>& a, const Var<T>& b);

template <class T>
Var<T> sum(Graph<T>* g, const Var<T>& a);
template <class T>
Var<T> mean(Graph<T>* g, const Var<T>& a);

// Zero-padded moving-window sum over every spatial axis of a [B,C,...]
// tensor; radii[i] applies to spatial axis i. Self-adjoint, so the
// backward pass is the same window sum of the incoming gradient.
template <class T>
Var<T> box_sum(Graph<T>* g, const Var<T>& a,
               const std::array<index_t, 3>& radii);

// Tensor-level kernel shared with the op and usable by tests.
template <class T>
Tensor<T> box_sum_tensor(const Tensor<T>& x, const std::array<index_t, 3>& radii);

}  // namespace lkreg
