#include "lkreg/ops.hpp"

#include <algorithm>
#include <cmath>

#include "lkreg/parallel.hpp"

namespace lkreg {

namespace {

template <class T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* what) {
  if (!a || !b) throw usage_error(std::string(what) + ": null operand");
  if (!a->value.same_shape(b->value))
    throw usage_error(std::string(what) + ": shape mismatch " +
                      shape_string(a->value.shape) + " vs " +
                      shape_string(b->value.shape));
}

}  // namespace

template <class T>
Var<T> add(Graph<T>* g, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "add");
  Tensor<T> out(a->value.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a->value.data[i] + b->value.data[i];
  return op_result<T>(
      g, std::move(out), {a, b},
      [a, b](Node<T>& self) {
        if (a->needs_grad) a->accumulate(self.grad);
        if (b->needs_grad) b->accumulate(self.grad);
      },
      "add");
}

template <class T>
Var<T> sub(Graph<T>* g, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "sub");
  Tensor<T> out(a->value.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a->value.data[i] - b->value.data[i];
  return op_result<T>(
      g, std::move(out), {a, b},
      [a, b](Node<T>& self) {
        if (a->needs_grad) a->accumulate(self.grad);
        if (b->needs_grad) {
          Tensor<T> gb(self.grad.shape);
          for (std::size_t i = 0; i < gb.data.size(); ++i)
            gb.data[i] = -self.grad.data[i];
          b->accumulate(std::move(gb));
        }
      },
      "sub");
}

template <class T>
Var<T> mul(Graph<T>* g, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "mul");
  Tensor<T> out(a->value.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a->value.data[i] * b->value.data[i];
  return op_result<T>(
      g, std::move(out), {a, b},
      [a, b](Node<T>& self) {
        if (a->needs_grad) {
          Tensor<T> ga(self.grad.shape);
          for (std::size_t i = 0; i < ga.data.size(); ++i)
            ga.data[i] = self.grad.data[i] * b->value.data[i];
          a->accumulate(std::move(ga));
        }
        if (b->needs_grad) {
          Tensor<T> gb(self.grad.shape);
          for (std::size_t i = 0; i < gb.data.size(); ++i)
            gb.data[i] = self.grad.data[i] * a->value.data[i];
          b->accumulate(std::move(gb));
        }
      },
      "mul");
}

template <class T>
Var<T> div(Graph<T>* g, const Var<T>& a, const Var<T>& b) {
  require_same_shape(a, b, "div");
  Tensor<T> out(a->value.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a->value.data[i] / b->value.data[i];
  return op_result<T>(
      g, std::move(out), {a, b},
      [a, b](Node<T>& self) {
        if (a->needs_grad) {
          Tensor<T> ga(self.grad.shape);
          for (std::size_t i = 0; i < ga.data.size(); ++i)
            ga.data[i] = self.grad.data[i] / b->value.data[i];
          a->accumulate(std::move(ga));
        }
        if (b->needs_grad) {
          Tensor<T> gb(self.grad.shape);
          for (std::size_t i = 0; i < gb.data.size(); ++i) {
            const T bv = b->value.data[i];
            gb.data[i] = -self.grad.data[i] * a->value.data[i] / (bv * bv);
          }
          b->accumulate(std::move(gb));
        }
      },
      "div");
}

template <class T>
Var<T> scale(Graph<T>* g, const Var<T>& a, T c) {
  Tensor<T> out(a->value.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a->value.data[i] * c;
  return op_result<T>(
      g, std::move(out), {a},
      [a, c](Node<T>& self) {
        if (!a->needs_grad) return;
        Tensor<T> ga(self.grad.shape);
        for (std::size_t i = 0; i < ga.data.size(); ++i)
          ga.data[i] = self.grad.data[i] * c;
        a->accumulate(std::move(ga));
      },
      "scale");
}

template <class T>
Var<T> add_scalar(Graph<T>* g, const Var<T>& a, T c) {
  Tensor<T> out(a->value.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i)
    out.data[i] = a->value.data[i] + c;
  return op_result<T>(
      g, std::move(out), {a},
      [a](Node<T>& self) {
        if (a->needs_grad) a->accumulate(self.grad);
      },
      "add_scalar");
}

template <class T>
Var<T> leaky_relu(Graph<T>* g, const Var<T>& a, T slope) {
  Tensor<T> out(a->value.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const T x = a->value.data[i];
    out.data[i] = x > T(0) ? x : slope * x;
  }
  return op_result<T>(
      g, std::move(out), {a},
      [a, slope](Node<T>& self) {
        if (!a->needs_grad) return;
        Tensor<T> ga(self.grad.shape);
        for (std::size_t i = 0; i < ga.data.size(); ++i)
          ga.data[i] =
              self.grad.data[i] * (a->value.data[i] > T(0) ? T(1) : slope);
        a->accumulate(std::move(ga));
      },
      "leaky_relu");
}

template <class T>
Var<T> prelu(Graph<T>* g, const Var<T>& a, const Var<T>& alpha) {
  if (!alpha || alpha->value.numel() != 1)
    throw usage_error("prelu: alpha must be a scalar tensor");
  const T s = alpha->value.data[0];
  Tensor<T> out(a->value.shape);
  for (std::size_t i = 0; i < out.data.size(); ++i) {
    const T x = a->value.data[i];
    out.data[i] = x > T(0) ? x : s * x;
  }
  return op_result<T>(
      g, std::move(out), {a, alpha},
      [a, alpha, s](Node<T>& self) {
        if (a->needs_grad) {
          Tensor<T> ga(self.grad.shape);
          for (std::size_t i = 0; i < ga.data.size(); ++i)
            ga.data[i] =
                self.grad.data[i] * (a->value.data[i] > T(0) ? T(1) : s);
          a->accumulate(std::move(ga));
        }
        if (alpha->needs_grad) {
          double acc = 0.0;
          for (std::size_t i = 0; i < self.grad.data.size(); ++i) {
            const T x = a->value.data[i];
            if (x <= T(0))
              acc += static_cast<double>(self.grad.data[i]) *
                     static_cast<double>(x);
          }
          alpha->accumulate(Tensor<T>::scalar(static_cast<T>(acc)));
        }
      },
      "prelu");
}

template <class T>
Var<T> concat(Graph<T>* g, int axis, const Var<T>& a, const Var<T>& b) {
  if (!a || !b) throw usage_error("concat: null operand");
  const auto& sa = a->value.shape;
  const auto& sb = b->value.shape;
  if (sa.size() != sb.size())
    throw usage_error("concat: rank mismatch");
  if (axis < 0 || axis >= static_cast<int>(sa.size()))
    throw usage_error("concat: axis out of range");
  for (std::size_t i = 0; i < sa.size(); ++i)
    if (static_cast<int>(i) != axis && sa[i] != sb[i])
      throw usage_error("concat: shape mismatch off the concat axis: " +
                        shape_string(sa) + " vs " + shape_string(sb));

  std::vector<index_t> so = sa;
  so[static_cast<std::size_t>(axis)] += sb[static_cast<std::size_t>(axis)];
  index_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= sa[static_cast<std::size_t>(i)];
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < sa.size(); ++i)
    inner *= sa[i];
  const index_t ablk = sa[static_cast<std::size_t>(axis)] * inner;
  const index_t bblk = sb[static_cast<std::size_t>(axis)] * inner;

  Tensor<T> out(so);
  for (index_t o = 0; o < outer; ++o) {
    std::copy_n(a->value.data.data() + o * ablk, ablk,
                out.data.data() + o * (ablk + bblk));
    std::copy_n(b->value.data.data() + o * bblk, bblk,
                out.data.data() + o * (ablk + bblk) + ablk);
  }
  return op_result<T>(
      g, std::move(out), {a, b},
      [a, b, outer, ablk, bblk](Node<T>& self) {
        if (a->needs_grad) {
          Tensor<T> ga(a->value.shape);
          for (index_t o = 0; o < outer; ++o)
            std::copy_n(self.grad.data.data() + o * (ablk + bblk), ablk,
                        ga.data.data() + o * ablk);
          a->accumulate(std::move(ga));
        }
        if (b->needs_grad) {
          Tensor<T> gb(b->value.shape);
          for (index_t o = 0; o < outer; ++o)
            std::copy_n(self.grad.data.data() + o * (ablk + bblk) + ablk, bblk,
                        gb.data.data() + o * bblk);
          b->accumulate(std::move(gb));
        }
      },
      "concat");
}

template <class T>
Var<T> sum(Graph<T>* g, const Var<T>& a) {
  double acc = 0.0;
  for (const T& v : a->value.data) acc += static_cast<double>(v);
  return op_result<T>(
      g, Tensor<T>::scalar(static_cast<T>(acc)), {a},
      [a](Node<T>& self) {
        if (!a->needs_grad) return;
        a->accumulate(Tensor<T>::full(a->value.shape, self.grad.data[0]));
      },
      "sum");
}

template <class T>
Var<T> mean(Graph<T>* g, const Var<T>& a) {
  const index_t n = a->value.numel();
  double acc = 0.0;
  for (const T& v : a->value.data) acc += static_cast<double>(v);
  acc /= static_cast<double>(n);
  return op_result<T>(
      g, Tensor<T>::scalar(static_cast<T>(acc)), {a},
      [a, n](Node<T>& self) {
        if (!a->needs_grad) return;
        const T gv = self.grad.data[0] / static_cast<T>(n);
        a->accumulate(Tensor<T>::full(a->value.shape, gv));
      },
      "mean");
}

namespace {

// One separable pass: window-sums along the axis with extent `len`, with
// `outer` blocks before it and `inner` contiguous elements after it.
template <class T>
void box_axis(const T* in, T* out, index_t outer, index_t len, index_t inner,
              index_t r) {
  parallel_chunks(outer, 1, [&](index_t o0, index_t o1) {
    for (index_t o = o0; o < o1; ++o) {
      const T* src = in + o * len * inner;
      T* dst = out + o * len * inner;
      for (index_t i = 0; i < len; ++i) {
        const index_t lo = std::max<index_t>(0, i - r);
        const index_t hi = std::min<index_t>(len - 1, i + r);
        T* drow = dst + i * inner;
        std::fill(drow, drow + inner, T(0));
        for (index_t j = lo; j <= hi; ++j) {
          const T* srow = src + j * inner;
          for (index_t c = 0; c < inner; ++c) drow[c] += srow[c];
        }
      }
    }
  });
}

}  // namespace

template <class T>
Tensor<T> box_sum_tensor(const Tensor<T>& x, const std::array<index_t, 3>& radii) {
  const int sr = x.spatial_rank();
  if (sr < 1 || sr > 3) throw usage_error("box_sum: spatial rank must be 1..3");
  Tensor<T> cur = x;
  Tensor<T> tmp(x.shape);
  index_t lead = x.dim(0) * x.dim(1);
  for (int a = 0; a < sr; ++a) {
    const index_t r = radii[static_cast<std::size_t>(a)];
    if (r < 0) throw usage_error("box_sum: negative radius");
    if (r == 0) continue;
    index_t outer = lead, inner = 1;
    for (int i = 0; i < a; ++i) outer *= x.dim(2 + i);
    for (int i = a + 1; i < sr; ++i) inner *= x.dim(2 + i);
    box_axis(cur.data.data(), tmp.data.data(), outer, x.dim(2 + a), inner, r);
    std::swap(cur, tmp);
  }
  return cur;
}

template <class T>
Var<T> box_sum(Graph<T>* g, const Var<T>& a,
               const std::array<index_t, 3>& radii) {
  Tensor<T> out = box_sum_tensor(a->value, radii);
  return op_result<T>(
      g, std::move(out), {a},
      [a, radii](Node<T>& self) {
        if (!a->needs_grad) return;
        a->accumulate(box_sum_tensor(self.grad, radii));
      },
      "box_sum");
}

#define LKREG_INSTANTIATE_OPS(T)                                            \
  template Var<T> add(Graph<T>*, const Var<T>&, const Var<T>&);             \
  template Var<T> sub(Graph<T>*, const Var<T>&, const Var<T>&);             \
  template Var<T> mul(Graph<T>*, const Var<T>&, const Var<T>&);             \
  template Var<T> div(Graph<T>*, const Var<T>&, const Var<T>&);             \
  template Var<T> scale(Graph<T>*, const Var<T>&, T);                       \
  template Var<T> add_scalar(Graph<T>*, const Var<T>&, T);                  \
  template Var<T> leaky_relu(Graph<T>*, const Var<T>&, T);                  \
  template Var<T> prelu(Graph<T>*, const Var<T>&, const Var<T>&);           \
  template Var<T> concat(Graph<T>*, int, const Var<T>&, const Var<T>&);     \
  template Var<T> sum(Graph<T>*, const Var<T>&);                            \
  template Var<T> mean(Graph<T>*, const Var<T>&);                           \
  template Var<T> box_sum(Graph<T>*, const Var<T>&,                         \
                          const std::array<index_t, 3>&);                   \
  template Tensor<T> box_sum_tensor(const Tensor<T>&,                       \
                                    const std::array<index_t, 3>&);

LKREG_INSTANTIATE_OPS(float)
LKREG_INSTANTIATE_OPS(double)
#undef LKREG_INSTANTIATE_OPS

}  // namespace lkreg
