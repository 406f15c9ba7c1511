#include "support/reference.hpp"

#include <algorithm>
#include <cmath>

namespace lkreg::testing {

namespace {

std::array<index_t, 3> spatial3(const std::vector<index_t>& shape, int dims) {
  std::array<index_t, 3> e{1, 1, 1};
  for (int i = 0; i < dims; ++i)
    e[static_cast<std::size_t>(i)] = shape[static_cast<std::size_t>(i + 2)];
  return e;
}

}  // namespace

template <class T>
Tensor<T> naive_conv(const Tensor<T>& x, const Tensor<T>& w,
                     const Tensor<T>* bias, const ConvSpec& spec) {
  const auto out_shape = spec.output_shape(x.shape);
  Tensor<T> y(out_shape);
  const auto in = spatial3(x.shape, spec.dims);
  const auto out = spatial3(out_shape, spec.dims);
  const index_t B = x.dim(0);

  for (index_t b = 0; b < B; ++b)
    for (index_t co = 0; co < spec.out_channels; ++co)
      for (index_t o0 = 0; o0 < out[0]; ++o0)
        for (index_t o1 = 0; o1 < out[1]; ++o1)
          for (index_t o2 = 0; o2 < out[2]; ++o2) {
            double acc =
                bias ? static_cast<double>(
                           bias->data[static_cast<std::size_t>(co)])
                     : 0.0;
            for (index_t ci = 0; ci < spec.in_channels; ++ci)
              for (index_t t0 = 0; t0 < spec.kernel[0]; ++t0)
                for (index_t t1 = 0; t1 < spec.kernel[1]; ++t1)
                  for (index_t t2 = 0; t2 < spec.kernel[2]; ++t2) {
                    const index_t i0 = o0 * spec.stride[0] - spec.pad[0] + t0;
                    const index_t i1 = o1 * spec.stride[1] - spec.pad[1] + t1;
                    const index_t i2 = o2 * spec.stride[2] - spec.pad[2] + t2;
                    if (i0 < 0 || i0 >= in[0] || i1 < 0 || i1 >= in[1] ||
                        i2 < 0 || i2 >= in[2])
                      continue;
                    const auto xi = static_cast<std::size_t>(
                        ((b * spec.in_channels + ci) * in[0] + i0) * in[1] *
                            in[2] +
                        i1 * in[2] + i2);
                    const auto wi = static_cast<std::size_t>(
                        ((co * spec.in_channels + ci) * spec.kernel[0] + t0) *
                            spec.kernel[1] * spec.kernel[2] +
                        t1 * spec.kernel[2] + t2);
                    acc += static_cast<double>(x.data[xi]) *
                           static_cast<double>(w.data[wi]);
                  }
            y.data[static_cast<std::size_t>(
                ((b * spec.out_channels + co) * out[0] + o0) * out[1] *
                    out[2] +
                o1 * out[2] + o2)] = static_cast<T>(acc);
          }
  return y;
}

template <class T>
Tensor<T> naive_tconv(const Tensor<T>& x, const Tensor<T>& w,
                      const Tensor<T>* bias, const TConvSpec& spec) {
  const auto out_shape = spec.output_shape(x.shape);
  Tensor<T> y(out_shape);
  const auto in = spatial3(x.shape, spec.dims);
  const auto out = spatial3(out_shape, spec.dims);
  const index_t B = x.dim(0);

  // scatter form: out[s*i + t] += w[ci,co,t] * x[ci,i]
  for (index_t b = 0; b < B; ++b) {
    if (bias)
      for (index_t co = 0; co < spec.out_channels; ++co)
        for (index_t n = 0; n < out[0] * out[1] * out[2]; ++n)
          y.data[static_cast<std::size_t>(
              (b * spec.out_channels + co) * out[0] * out[1] * out[2] + n)] =
              bias->data[static_cast<std::size_t>(co)];
    for (index_t ci = 0; ci < spec.in_channels; ++ci)
      for (index_t co = 0; co < spec.out_channels; ++co)
        for (index_t i0 = 0; i0 < in[0]; ++i0)
          for (index_t i1 = 0; i1 < in[1]; ++i1)
            for (index_t i2 = 0; i2 < in[2]; ++i2)
              for (index_t t0 = 0; t0 < spec.kernel[0]; ++t0)
                for (index_t t1 = 0; t1 < spec.kernel[1]; ++t1)
                  for (index_t t2 = 0; t2 < spec.kernel[2]; ++t2) {
                    const index_t o0 = i0 * spec.kernel[0] + t0;
                    const index_t o1 = i1 * spec.kernel[1] + t1;
                    const index_t o2 = i2 * spec.kernel[2] + t2;
                    const auto wi = static_cast<std::size_t>(
                        ((ci * spec.out_channels + co) * spec.kernel[0] + t0) *
                            spec.kernel[1] * spec.kernel[2] +
                        t1 * spec.kernel[2] + t2);
                    const auto xi = static_cast<std::size_t>(
                        ((b * spec.in_channels + ci) * in[0] + i0) * in[1] *
                            in[2] +
                        i1 * in[2] + i2);
                    y.data[static_cast<std::size_t>(
                        ((b * spec.out_channels + co) * out[0] + o0) * out[1] *
                            out[2] +
                        o1 * out[2] + o2)] +=
                        w.data[wi] * x.data[xi];
                  }
  }
  return y;
}

template <class T>
Tensor<T> naive_box_sum(const Tensor<T>& x,
                        const std::array<index_t, 3>& radii) {
  const int sr = x.spatial_rank();
  const auto ext = spatial3(x.shape, sr);
  Tensor<T> y(x.shape);
  const index_t lead = x.dim(0) * x.dim(1);
  const index_t n = ext[0] * ext[1] * ext[2];
  const index_t r0 = sr > 0 ? radii[0] : 0;
  const index_t r1 = sr > 1 ? radii[1] : 0;
  const index_t r2 = sr > 2 ? radii[2] : 0;
  for (index_t c = 0; c < lead; ++c)
    for (index_t i0 = 0; i0 < ext[0]; ++i0)
      for (index_t i1 = 0; i1 < ext[1]; ++i1)
        for (index_t i2 = 0; i2 < ext[2]; ++i2) {
          double acc = 0.0;
          for (index_t d0 = -r0; d0 <= r0; ++d0)
            for (index_t d1 = -r1; d1 <= r1; ++d1)
              for (index_t d2 = -r2; d2 <= r2; ++d2) {
                const index_t j0 = i0 + d0, j1 = i1 + d1, j2 = i2 + d2;
                if (j0 < 0 || j0 >= ext[0] || j1 < 0 || j1 >= ext[1] ||
                    j2 < 0 || j2 >= ext[2])
                  continue;
                acc += static_cast<double>(
                    x.data[static_cast<std::size_t>(c * n + (j0 * ext[1] + j1) *
                                                              ext[2] +
                                                    j2)]);
              }
          y.data[static_cast<std::size_t>(
              c * n + (i0 * ext[1] + i1) * ext[2] + i2)] = static_cast<T>(acc);
        }
  return y;
}

template <class T>
double naive_diffusion(const Tensor<T>& field) {
  const int D = field.spatial_rank();
  const auto ext = spatial3(field.shape, D);
  const index_t lead = field.dim(0) * field.dim(1);
  const index_t n = ext[0] * ext[1] * ext[2];
  double acc = 0.0;
  for (index_t c = 0; c < lead; ++c)
    for (index_t i0 = 0; i0 < ext[0]; ++i0)
      for (index_t i1 = 0; i1 < ext[1]; ++i1)
        for (index_t i2 = 0; i2 < ext[2]; ++i2) {
          const auto at = [&](index_t a, index_t b_, index_t cc) {
            return static_cast<double>(
                field.data[static_cast<std::size_t>(
                    c * n + (a * ext[1] + b_) * ext[2] + cc)]);
          };
          const double v = at(i0, i1, i2);
          if (i0 + 1 < ext[0]) {
            const double d = at(i0 + 1, i1, i2) - v;
            acc += d * d;
          }
          if (D >= 2 && i1 + 1 < ext[1]) {
            const double d = at(i0, i1 + 1, i2) - v;
            acc += d * d;
          }
          if (D >= 3 && i2 + 1 < ext[2]) {
            const double d = at(i0, i1, i2 + 1) - v;
            acc += d * d;
          }
        }
  return acc / static_cast<double>(field.numel());
}

template <class T>
Tensor<T> random_tensor(Rng& rng, std::vector<index_t> shape, double lo,
                        double hi) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <class T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape != b.shape) return std::numeric_limits<double>::infinity();
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) -
                             static_cast<double>(b.data[i])));
  return m;
}

template <class T>
double dot(const Tensor<T>& a, const Tensor<T>& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    acc += static_cast<double>(a.data[i]) * static_cast<double>(b.data[i]);
  return acc;
}

double gradcheck_max_rel_err(
    const std::function<Var<double>(Graph<double>*)>& forward,
    const std::vector<Var<double>>& leaves, const GradCheck& opts) {
  for (const auto& l : leaves) l->zero_grad();
  Graph<double> g;
  Var<double> loss = forward(&g);
  g.backward(loss);

  std::vector<Tensor<double>> analytic;
  double grad_scale = 0.0;
  for (const auto& l : leaves) {
    analytic.push_back(l->grad);
    for (double v : l->grad.data) grad_scale = std::max(grad_scale, std::abs(v));
  }
  const double floor = std::max(1e-6, 1e-3 * grad_scale);

  double worst = 0.0;
  const double h = opts.h;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& value = leaves[li]->value;
    const index_t n = value.numel();
    std::vector<index_t> coords;
    if (opts.max_coords_per_leaf > 0 &&
        n > static_cast<index_t>(opts.max_coords_per_leaf)) {
      if (opts.coord_rng == nullptr)
        throw usage_error("gradcheck: sampling requested without rng");
      for (int i = 0; i < opts.max_coords_per_leaf; ++i)
        coords.push_back(opts.coord_rng->uniform_int(0, n - 1));
    } else {
      coords.resize(static_cast<std::size_t>(n));
      for (index_t i = 0; i < n; ++i) coords[static_cast<std::size_t>(i)] = i;
    }
    for (index_t c : coords) {
      const auto ci = static_cast<std::size_t>(c);
      const double orig = value.data[ci];
      value.data[ci] = orig + h;
      const double fp = forward(nullptr)->value.data[0];
      value.data[ci] = orig - h;
      const double fm = forward(nullptr)->value.data[0];
      value.data[ci] = orig;
      const double fd = (fp - fm) / (2.0 * h);
      const double an = analytic[li].data[ci];
      const double rel =
          std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), floor});
      worst = std::max(worst, rel);
    }
  }
  return worst;
}

#define LKREG_INSTANTIATE_REF(T)                                              \
  template Tensor<T> naive_conv(const Tensor<T>&, const Tensor<T>&,           \
                                const Tensor<T>*, const ConvSpec&);           \
  template Tensor<T> naive_tconv(const Tensor<T>&, const Tensor<T>&,          \
                                 const Tensor<T>*, const TConvSpec&);         \
  template Tensor<T> naive_box_sum(const Tensor<T>&,                          \
                                   const std::array<index_t, 3>&);            \
  template double naive_diffusion(const Tensor<T>&);                          \
  template Tensor<T> random_tensor(Rng&, std::vector<index_t>, double,        \
                                   double);                                   \
  template double max_abs_diff(const Tensor<T>&, const Tensor<T>&);           \
  template double dot(const Tensor<T>&, const Tensor<T>&);

LKREG_INSTANTIATE_REF(float)
LKREG_INSTANTIATE_REF(double)
#undef LKREG_INSTANTIATE_REF

}  // namespace lkreg::testing
