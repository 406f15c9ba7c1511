#pragma once

#include <array>
#include <optional>

#include "lkreg/graph.hpp"

namespace lkreg {

// Convolution is cross-correlation (no kernel flip) with zero padding,
// matching deep-learning convention. Spatial rank 1..3; internally all
// shapes are normalized to three spatial dims with unit extents.

struct ConvSpec {
  int dims = 2;  // spatial rank
  index_t in_channels = 1;
  index_t out_channels = 1;
  std::array<index_t, 3> kernel{1, 1, 1};
  std::array<index_t, 3> stride{1, 1, 1};
  std::array<index_t, 3> pad{0, 0, 0};
  bool has_bias = true;

  // stride-1, same-padding conv; kernel must be odd.
  static ConvSpec same(int dims, index_t cin, index_t cout, index_t k,
                       bool bias = true);
  // stride-2 downsampling conv, kernel 3, pad 1.
  static ConvSpec down(int dims, index_t cin, index_t cout, bool bias = true);

  void validate() const;
  index_t kernel_numel() const;
  std::vector<index_t> weight_shape() const;  // [Cout, Cin, kernel...]
  // Pure shape function: floor((in + 2*pad - kernel)/stride) + 1 per axis.
  std::vector<index_t> output_shape(const std::vector<index_t>& input) const;
};

// Transposed convolution restricted to kernel == stride (the builder uses
// kernel 2, stride 2): every output location depends on exactly one input
// location, and the op is the exact adjoint of the matching strided conv.
struct TConvSpec {
  int dims = 2;
  index_t in_channels = 1;
  index_t out_channels = 1;
  std::array<index_t, 3> kernel{1, 1, 1};  // == stride
  bool has_bias = true;

  static TConvSpec up2(int dims, index_t cin, index_t cout, bool bias = true);

  void validate() const;
  index_t kernel_numel() const;
  std::vector<index_t> weight_shape() const;  // [Cin, Cout, kernel...]
  std::vector<index_t> output_shape(const std::vector<index_t>& input) const;
};

// ---- tensor-level kernels ----

template <class T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w,
                       const Tensor<T>* bias, const ConvSpec& spec);

template <class T>
struct ConvGrads {
  std::optional<Tensor<T>> input;
  std::optional<Tensor<T>> weight;
  std::optional<Tensor<T>> bias;
};

template <class T>
ConvGrads<T> conv_vjp(const Tensor<T>& x, const Tensor<T>& w,
                      const ConvSpec& spec, const Tensor<T>& grad_out,
                      bool need_input, bool need_weight, bool need_bias);

template <class T>
Tensor<T> tconv_forward(const Tensor<T>& x, const Tensor<T>& w,
                        const Tensor<T>* bias, const TConvSpec& spec);

template <class T>
ConvGrads<T> tconv_vjp(const Tensor<T>& x, const Tensor<T>& w,
                       const TConvSpec& spec, const Tensor<T>& grad_out,
                       bool need_input, bool need_weight, bool need_bias);

// ---- tape ops ----

template <class T>
Var<T> conv(Graph<T>* g, const Var<T>& x, const Var<T>& w, const Var<T>& b,
            const ConvSpec& spec);

template <class T>
Var<T> transposed_conv(Graph<T>* g, const Var<T>& x, const Var<T>& w,
                       const Var<T>& b, const TConvSpec& spec);

}  // namespace lkreg
