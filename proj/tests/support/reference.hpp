#pragma once

// Independent reference implementations used as test oracles. These stay
// deliberately naive (nested loops, no shared code with the fast paths)
// and live only in the test tree.

#include <functional>

#include "lkreg/conv.hpp"
#include "lkreg/graph.hpp"
#include "lkreg/rng.hpp"

namespace lkreg::testing {

template <class T>
Tensor<T> naive_conv(const Tensor<T>& x, const Tensor<T>& w,
                     const Tensor<T>* bias, const ConvSpec& spec);

template <class T>
Tensor<T> naive_tconv(const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>* bias, const TConvSpec& spec);

template <class T>
Tensor<T> naive_box_sum(const Tensor<T>& x, const std::array<index_t, 3>& radii);

template <class T>
double naive_diffusion(const Tensor<T>& field);

template <class T>
Tensor<T> random_tensor(Rng& rng, std::vector<index_t> shape, double lo = -1.0,
                        double hi = 1.0);

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b);

template <class T>
double dot(const Tensor<T>& a, const Tensor<T>& b);

// Central-difference gradient check. `forward` must rebuild the full
// computation from the current leaf values (record on the given graph, or
// evaluate without recording when the graph is null). Checks every
// coordinate of every leaf unless max_coords_per_leaf > 0, in which case
// that many coordinates are sampled per leaf with coord_rng.
struct GradCheck {
  double h = 1e-5;
  int max_coords_per_leaf = -1;
  Rng* coord_rng = nullptr;
};

double gradcheck_max_rel_err(
    const std::function<Var<double>(Graph<double>*)>& forward,
    const std::vector<Var<double>>& leaves, const GradCheck& opts = {});

}  // namespace lkreg::testing
