#include "lkreg/warp.hpp"

#include <algorithm>
#include <cmath>

#include "lkreg/ops.hpp"
#include "lkreg/parallel.hpp"

namespace lkreg {

namespace {

struct FieldGeom {
  int D = 2;                         // spatial rank
  std::array<index_t, 3> ext{1, 1, 1};
  index_t n = 1;                     // spatial numel
};

template <class T>
FieldGeom geometry(const Tensor<T>& image, const Tensor<T>& disp,
                   const char* what) {
  if (image.rank() != disp.rank())
    throw usage_error(std::string(what) + ": rank mismatch between image " +
                      shape_string(image.shape) + " and field " +
                      shape_string(disp.shape));
  const int D = image.spatial_rank();
  if (D < 2 || D > 3)
    throw usage_error(std::string(what) + ": spatial rank must be 2 or 3");
  if (image.dim(0) != 1 || disp.dim(0) != 1)
    throw usage_error(std::string(what) + ": batch extent must be 1");
  if (disp.dim(1) != D)
    throw usage_error(std::string(what) + ": field must have " +
                      std::to_string(D) + " channels, got " +
                      std::to_string(disp.dim(1)));
  FieldGeom g;
  g.D = D;
  for (int i = 0; i < D; ++i) {
    if (image.dim(2 + i) != disp.dim(2 + i))
      throw usage_error(std::string(what) + ": spatial extents differ: " +
                        shape_string(image.shape) + " vs " +
                        shape_string(disp.shape));
    g.ext[static_cast<std::size_t>(i)] = image.dim(2 + i);
    g.n *= image.dim(2 + i);
  }
  return g;
}

struct Corners {
  // per dim: low index, high index, frac, in-range indicator for d/dp
  std::array<index_t, 3> lo{0, 0, 0};
  std::array<index_t, 3> hi{0, 0, 0};
  std::array<double, 3> f{0.0, 0.0, 0.0};
  std::array<bool, 3> inb{false, false, false};
};

template <class T>
inline Corners sample_corners(const FieldGeom& g, const T* u, index_t vox,
                              const std::array<index_t, 3>& x) {
  Corners c;
  for (int d = 0; d < g.D; ++d) {
    const auto ud = static_cast<double>(u[d * g.n + vox]);
    const double e = static_cast<double>(g.ext[static_cast<std::size_t>(d)] - 1);
    double p = static_cast<double>(x[static_cast<std::size_t>(d)]) + ud;
    c.inb[static_cast<std::size_t>(d)] = (p > 0.0 && p < e);
    p = std::min(std::max(p, 0.0), e);
    double fl = std::floor(p);
    index_t i0 = static_cast<index_t>(fl);
    c.lo[static_cast<std::size_t>(d)] = i0;
    c.hi[static_cast<std::size_t>(d)] =
        std::min<index_t>(i0 + 1, g.ext[static_cast<std::size_t>(d)] - 1);
    c.f[static_cast<std::size_t>(d)] = p - fl;
  }
  return c;
}

inline index_t corner_index(const FieldGeom& g, const Corners& c, int bits) {
  index_t idx = 0;
  for (int d = 0; d < g.D; ++d) {
    const auto u = static_cast<std::size_t>(d);
    const index_t i = (bits >> d) & 1 ? c.hi[u] : c.lo[u];
    idx = idx * g.ext[u] + i;
  }
  return idx;
}

inline double corner_weight(const FieldGeom& g, const Corners& c, int bits) {
  double w = 1.0;
  for (int d = 0; d < g.D; ++d) {
    const auto u = static_cast<std::size_t>(d);
    w *= (bits >> d) & 1 ? c.f[u] : 1.0 - c.f[u];
  }
  return w;
}

}  // namespace

template <class T>
Tensor<T> warp_linear_forward(const Tensor<T>& image, const Tensor<T>& disp) {
  const FieldGeom g = geometry(image, disp, "warp");
  const index_t C = image.dim(1);
  const int ncorner = 1 << g.D;
  Tensor<T> out(image.shape);
  const T* u = disp.data.data();
  const T* img = image.data.data();
  T* dst = out.data.data();

  parallel_chunks(g.n, 2048, [&](index_t v0, index_t v1) {
    std::array<index_t, 3> x{0, 0, 0};
    for (index_t vox = v0; vox < v1; ++vox) {
      index_t rem = vox;
      for (int d = g.D - 1; d >= 0; --d) {
        x[static_cast<std::size_t>(d)] = rem % g.ext[static_cast<std::size_t>(d)];
        rem /= g.ext[static_cast<std::size_t>(d)];
      }
      const Corners c = sample_corners(g, u, vox, x);
      for (index_t ch = 0; ch < C; ++ch) {
        const T* plane = img + ch * g.n;
        T acc = T(0);
        bool first = true;
        for (int b = 0; b < ncorner; ++b) {
          const double w = corner_weight(g, c, b);
          if (w == 0.0) continue;
          const T term = static_cast<T>(w) * plane[corner_index(g, c, b)];
          acc = first ? term : acc + term;
          first = false;
        }
        dst[ch * g.n + vox] = acc;
      }
    }
  });
  return out;
}

template <class T>
Tensor<T> warp_nearest(const Tensor<T>& image, const Tensor<T>& disp) {
  const FieldGeom g = geometry(image, disp, "warp");
  const index_t C = image.dim(1);
  Tensor<T> out(image.shape);
  const T* u = disp.data.data();

  parallel_chunks(g.n, 4096, [&](index_t v0, index_t v1) {
    std::array<index_t, 3> x{0, 0, 0};
    for (index_t vox = v0; vox < v1; ++vox) {
      index_t rem = vox;
      for (int d = g.D - 1; d >= 0; --d) {
        x[static_cast<std::size_t>(d)] = rem % g.ext[static_cast<std::size_t>(d)];
        rem /= g.ext[static_cast<std::size_t>(d)];
      }
      index_t idx = 0;
      for (int d = 0; d < g.D; ++d) {
        const auto du = static_cast<std::size_t>(d);
        const double p = static_cast<double>(x[du]) +
                         static_cast<double>(u[d * g.n + vox]);
        index_t i = static_cast<index_t>(std::floor(p + 0.5));
        i = std::min(std::max<index_t>(i, 0), g.ext[du] - 1);
        idx = idx * g.ext[du] + i;
      }
      for (index_t ch = 0; ch < C; ++ch)
        out.data[static_cast<std::size_t>(ch * g.n + vox)] =
            image.data[static_cast<std::size_t>(ch * g.n + idx)];
    }
  });
  return out;
}

template <class T>
void warp_linear_vjp(const Tensor<T>& image, const Tensor<T>& disp,
                     const Tensor<T>& grad_out, Tensor<T>* grad_image,
                     Tensor<T>* grad_disp) {
  const FieldGeom g = geometry(image, disp, "warp backward");
  if (grad_out.shape != image.shape)
    throw usage_error("warp backward: grad shape mismatch");
  const index_t C = image.dim(1);
  const int ncorner = 1 << g.D;
  const T* u = disp.data.data();
  const T* img = image.data.data();
  const T* go = grad_out.data.data();

  // The image gradient is a scatter, so this pass stays sequential.
  std::array<index_t, 3> x{0, 0, 0};
  for (index_t vox = 0; vox < g.n; ++vox) {
    index_t rem = vox;
    for (int d = g.D - 1; d >= 0; --d) {
      x[static_cast<std::size_t>(d)] = rem % g.ext[static_cast<std::size_t>(d)];
      rem /= g.ext[static_cast<std::size_t>(d)];
    }
    const Corners c = sample_corners(g, u, vox, x);
    for (index_t ch = 0; ch < C; ++ch) {
      const T gv = go[ch * g.n + vox];
      if (gv == T(0)) continue;
      if (grad_image != nullptr) {
        for (int b = 0; b < ncorner; ++b) {
          const double w = corner_weight(g, c, b);
          if (w == 0.0) continue;
          grad_image->data[static_cast<std::size_t>(
              ch * g.n + corner_index(g, c, b))] +=
              static_cast<T>(w) * gv;
        }
      }
      if (grad_disp != nullptr) {
        const T* plane = img + ch * g.n;
        for (int d = 0; d < g.D; ++d) {
          const auto du = static_cast<std::size_t>(d);
          if (!c.inb[du]) continue;
          double dv = 0.0;
          for (int b = 0; b < ncorner; ++b) {
            double w = 1.0;
            for (int e = 0; e < g.D; ++e) {
              if (e == d) continue;
              const auto ue = static_cast<std::size_t>(e);
              w *= (b >> e) & 1 ? c.f[ue] : 1.0 - c.f[ue];
            }
            const double sign = (b >> d) & 1 ? 1.0 : -1.0;
            dv += sign * w *
                  static_cast<double>(plane[corner_index(g, c, b)]);
          }
          grad_disp->data[static_cast<std::size_t>(d * g.n + vox)] +=
              gv * static_cast<T>(dv);
        }
      }
    }
  }
}

template <class T>
Var<T> warp(Graph<T>* g, const Var<T>& image, const Var<T>& disp,
            WarpMode mode) {
  if (!image || !disp) throw usage_error("warp: null operand");
  if (mode == WarpMode::nearest) {
    if (g != nullptr && (image->needs_grad || disp->needs_grad))
      throw usage_error(
          "warp: nearest mode is not differentiable; use it without a graph");
    return make_constant(warp_nearest(image->value, disp->value));
  }
  Tensor<T> out = warp_linear_forward(image->value, disp->value);
  return op_result<T>(
      g, std::move(out), {image, disp},
      [image, disp](Node<T>& self) {
        Tensor<T> gi, gd;
        if (image->needs_grad) gi = Tensor<T>(image->value.shape);
        if (disp->needs_grad) gd = Tensor<T>(disp->value.shape);
        warp_linear_vjp(image->value, disp->value, self.grad,
                        image->needs_grad ? &gi : nullptr,
                        disp->needs_grad ? &gd : nullptr);
        if (image->needs_grad) image->accumulate(std::move(gi));
        if (disp->needs_grad) disp->accumulate(std::move(gd));
      },
      "warp");
}

template <class T>
Var<T> exp_velocity(Graph<T>* g, const Var<T>& v, int steps) {
  if (!v) throw usage_error("exp_velocity: null field");
  if (steps < 0) throw usage_error("exp_velocity: steps must be >= 0");
  geometry(v->value, v->value, "exp_velocity");
  Var<T> u = scale(g, v, static_cast<T>(std::ldexp(1.0, -steps)));
  for (int s = 0; s < steps; ++s) u = add(g, u, warp(g, u, u));
  return u;
}

template <class T>
Tensor<T> exp_velocity_tensor(const Tensor<T>& v, int steps) {
  auto var = make_constant(v);
  return exp_velocity<T>(nullptr, var, steps)->value;
}

namespace {

// d(u_channel)/d(axis) at vox; central in the interior, one-sided at the
// borders, zero when the axis has extent 1.
template <class T>
inline double partial(const T* chan, const FieldGeom& g,
                      const std::array<index_t, 3>& x, index_t vox, int axis) {
  const auto ua = static_cast<std::size_t>(axis);
  const index_t e = g.ext[ua];
  if (e < 2) return 0.0;
  index_t stride = 1;
  for (int d = g.D - 1; d > axis; --d)
    stride *= g.ext[static_cast<std::size_t>(d)];
  const index_t i = x[ua];
  if (i > 0 && i < e - 1)
    return 0.5 * (static_cast<double>(chan[vox + stride]) -
                  static_cast<double>(chan[vox - stride]));
  if (i == 0)
    return static_cast<double>(chan[vox + stride]) -
           static_cast<double>(chan[vox]);
  return static_cast<double>(chan[vox]) -
         static_cast<double>(chan[vox - stride]);
}

}  // namespace

template <class T>
Tensor<T> jacobian_determinant(const Tensor<T>& disp) {
  const FieldGeom g = geometry(disp, disp, "jacobian");
  std::vector<index_t> out_shape{1, 1};
  for (int d = 0; d < g.D; ++d)
    out_shape.push_back(g.ext[static_cast<std::size_t>(d)]);
  Tensor<T> det(out_shape);
  const T* u = disp.data.data();

  parallel_chunks(g.n, 4096, [&](index_t v0, index_t v1) {
    std::array<index_t, 3> x{0, 0, 0};
    for (index_t vox = v0; vox < v1; ++vox) {
      index_t rem = vox;
      for (int d = g.D - 1; d >= 0; --d) {
        x[static_cast<std::size_t>(d)] = rem % g.ext[static_cast<std::size_t>(d)];
        rem /= g.ext[static_cast<std::size_t>(d)];
      }
      double J[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
      for (int i = 0; i < g.D; ++i)
        for (int j = 0; j < g.D; ++j)
          J[i][j] = (i == j ? 1.0 : 0.0) +
                    partial(u + i * g.n, g, x, vox, j);
      double dv;
      if (g.D == 2) {
        dv = J[0][0] * J[1][1] - J[0][1] * J[1][0];
      } else {
        dv = J[0][0] * (J[1][1] * J[2][2] - J[1][2] * J[2][1]) -
             J[0][1] * (J[1][0] * J[2][2] - J[1][2] * J[2][0]) +
             J[0][2] * (J[1][0] * J[2][1] - J[1][1] * J[2][0]);
      }
      det.data[static_cast<std::size_t>(vox)] = static_cast<T>(dv);
    }
  });
  return det;
}

template <class T>
double fold_fraction(const Tensor<T>& disp) {
  const Tensor<T> det = jacobian_determinant(disp);
  index_t folded = 0;
  for (const T& v : det.data)
    if (v <= T(0)) ++folded;
  return 100.0 * static_cast<double>(folded) /
         static_cast<double>(det.numel());
}

double sd_log_jacobian_of_dets(const std::vector<double>& dets) {
  if (dets.empty()) return 0.0;
  constexpr double kEps = 1e-6;
  double mean = 0.0;
  std::vector<double> logs(dets.size());
  for (std::size_t i = 0; i < dets.size(); ++i) {
    logs[i] = std::log(std::max(dets[i], kEps));
    mean += logs[i];
  }
  mean /= static_cast<double>(logs.size());
  double var = 0.0;
  for (double l : logs) var += (l - mean) * (l - mean);
  var /= static_cast<double>(logs.size());
  return std::sqrt(var);
}

template <class T>
double sd_log_jacobian(const Tensor<T>& disp) {
  const Tensor<T> det = jacobian_determinant(disp);
  std::vector<double> dets(det.data.begin(), det.data.end());
  return sd_log_jacobian_of_dets(dets);
}

#define LKREG_INSTANTIATE_WARP(T)                                             \
  template Tensor<T> warp_linear_forward(const Tensor<T>&, const Tensor<T>&); \
  template Tensor<T> warp_nearest(const Tensor<T>&, const Tensor<T>&);        \
  template void warp_linear_vjp(const Tensor<T>&, const Tensor<T>&,           \
                                const Tensor<T>&, Tensor<T>*, Tensor<T>*);    \
  template Var<T> warp(Graph<T>*, const Var<T>&, const Var<T>&, WarpMode);    \
  template Var<T> exp_velocity(Graph<T>*, const Var<T>&, int);                \
  template Tensor<T> exp_velocity_tensor(const Tensor<T>&, int);              \
  template Tensor<T> jacobian_determinant(const Tensor<T>&);                  \
  template double fold_fraction(const Tensor<T>&);                            \
  template double sd_log_jacobian(const Tensor<T>&);

LKREG_INSTANTIATE_WARP(float)
LKREG_INSTANTIATE_WARP(double)
#undef LKREG_INSTANTIATE_WARP

}  // namespace lkreg
