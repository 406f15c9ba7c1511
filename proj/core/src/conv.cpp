#include "lkreg/conv.hpp"

#include <Eigen/Dense>

#include <cstring>

#include "lkreg/parallel.hpp"

namespace lkreg {

namespace {

template <class T>
using MatRM = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <class T>
using MapM = Eigen::Map<MatRM<T>>;
template <class T>
using MapCM = Eigen::Map<const MatRM<T>>;

constexpr index_t kGemmRowGrain = 16;

struct Dims3 {
  std::array<index_t, 3> in{1, 1, 1};
  std::array<index_t, 3> out{1, 1, 1};
  index_t nin = 1;
  index_t nout = 1;
};

Dims3 normalized_dims(const std::vector<index_t>& in_shape, int dims,
                      const std::vector<index_t>& out_shape) {
  Dims3 d;
  for (int i = 0; i < dims; ++i) {
    d.in[static_cast<std::size_t>(i)] = in_shape[static_cast<std::size_t>(2 + i)];
    d.out[static_cast<std::size_t>(i)] =
        out_shape[static_cast<std::size_t>(2 + i)];
  }
  d.nin = d.in[0] * d.in[1] * d.in[2];
  d.nout = d.out[0] * d.out[1] * d.out[2];
  return d;
}

void check_spatial_rank(const std::vector<index_t>& shape, int dims,
                        const char* what) {
  if (static_cast<int>(shape.size()) != dims + 2)
    throw usage_error(std::string(what) + ": expected rank " +
                      std::to_string(dims + 2) + " input, got shape " +
                      shape_string(shape));
}

// Fills one K x N column matrix for a single batch item. Row layout is
// (ci * kvol + tap), taps row-major over kernel dims; columns are output
// positions row-major. Out-of-range samples are zero.
template <class T>
void im2col(const T* x, const ConvSpec& s, const Dims3& d, T* col) {
  const index_t kvol = s.kernel_numel();
  const index_t K = s.in_channels * kvol;
  const index_t N = d.nout;
  const index_t k1 = s.kernel[1], k2 = s.kernel[2];
  const index_t s0 = s.stride[0], s1 = s.stride[1], s2 = s.stride[2];
  const index_t p0 = s.pad[0], p1 = s.pad[1], p2 = s.pad[2];

  parallel_chunks(K, 4, [&](index_t r0, index_t r1) {
    for (index_t row = r0; row < r1; ++row) {
      const index_t ci = row / kvol;
      index_t t = row % kvol;
      const index_t t2 = t % k2;
      t /= k2;
      const index_t t1 = t % k1;
      const index_t t0 = t / k1;
      const T* xc = x + ci * d.nin;
      T* crow = col + row * N;
      index_t n = 0;
      for (index_t o0 = 0; o0 < d.out[0]; ++o0) {
        const index_t i0 = o0 * s0 - p0 + t0;
        const bool ok0 = (i0 >= 0 && i0 < d.in[0]);
        for (index_t o1 = 0; o1 < d.out[1]; ++o1) {
          const index_t i1 = o1 * s1 - p1 + t1;
          if (!ok0 || i1 < 0 || i1 >= d.in[1]) {
            std::fill(crow + n, crow + n + d.out[2], T(0));
            n += d.out[2];
            continue;
          }
          const T* xrow = xc + (i0 * d.in[1] + i1) * d.in[2];
          if (s2 == 1) {
            // valid output range along the contiguous axis
            const index_t lo = std::max<index_t>(0, p2 - t2);
            const index_t hi =
                std::min<index_t>(d.out[2], d.in[2] + p2 - t2);
            if (lo > 0) std::fill(crow + n, crow + n + lo, T(0));
            if (hi > lo)
              std::memcpy(crow + n + lo, xrow + (lo - p2 + t2),
                          static_cast<std::size_t>(hi - lo) * sizeof(T));
            if (hi < d.out[2])
              std::fill(crow + n + std::max(lo, hi), crow + n + d.out[2],
                        T(0));
            n += d.out[2];
          } else {
            for (index_t o2 = 0; o2 < d.out[2]; ++o2) {
              const index_t i2 = o2 * s2 - p2 + t2;
              crow[n++] = (i2 >= 0 && i2 < d.in[2]) ? xrow[i2] : T(0);
            }
          }
        }
      }
    }
  });
}

// Adjoint of im2col: gathers column-gradients back onto the input grid.
template <class T>
void col2im_gather(const T* colgrad, const ConvSpec& s, const Dims3& d,
                   T* gx) {
  const index_t N = d.nout;
  const index_t k0 = s.kernel[0], k1 = s.kernel[1], k2 = s.kernel[2];
  const index_t s0 = s.stride[0], s1 = s.stride[1], s2 = s.stride[2];
  const index_t p0 = s.pad[0], p1 = s.pad[1], p2 = s.pad[2];
  const index_t total = s.in_channels * d.nin;

  parallel_chunks(total, 4096, [&](index_t e0, index_t e1) {
    for (index_t e = e0; e < e1; ++e) {
      index_t rem = e;
      const index_t x2 = rem % d.in[2];
      rem /= d.in[2];
      const index_t x1 = rem % d.in[1];
      rem /= d.in[1];
      const index_t x0 = rem % d.in[0];
      const index_t ci = rem / d.in[0];
      T acc = T(0);
      for (index_t t0 = 0; t0 < k0; ++t0) {
        const index_t q0 = x0 + p0 - t0;
        if (q0 < 0 || q0 % s0 != 0) continue;
        const index_t o0 = q0 / s0;
        if (o0 >= d.out[0]) continue;
        for (index_t t1 = 0; t1 < k1; ++t1) {
          const index_t q1 = x1 + p1 - t1;
          if (q1 < 0 || q1 % s1 != 0) continue;
          const index_t o1 = q1 / s1;
          if (o1 >= d.out[1]) continue;
          for (index_t t2 = 0; t2 < k2; ++t2) {
            const index_t q2 = x2 + p2 - t2;
            if (q2 < 0 || q2 % s2 != 0) continue;
            const index_t o2 = q2 / s2;
            if (o2 >= d.out[2]) continue;
            const index_t row = (ci * k0 + t0) * k1 * k2 + t1 * k2 + t2;
            acc += colgrad[row * N + (o0 * d.out[1] + o1) * d.out[2] + o2];
          }
        }
      }
      gx[e] = acc;
    }
  });
}

template <class T>
void gemm_chunked(const T* a, index_t m, index_t k, const T* b, index_t n,
                  T* out, bool accumulate) {
  MapCM<T> A(a, m, k);
  MapCM<T> B(b, k, n);
  MapM<T> C(out, m, n);
  parallel_chunks(m, kGemmRowGrain, [&](index_t r0, index_t r1) {
    if (accumulate)
      C.middleRows(r0, r1 - r0).noalias() += A.middleRows(r0, r1 - r0) * B;
    else
      C.middleRows(r0, r1 - r0).noalias() = A.middleRows(r0, r1 - r0) * B;
  });
}

// C[m x n] (+)= A[k x m]^T * B[k x n]
template <class T>
void gemm_at_b(const T* a, index_t k, index_t m, const T* b, index_t n,
               T* out, bool accumulate) {
  MapCM<T> A(a, k, m);
  MapCM<T> B(b, k, n);
  MapM<T> C(out, m, n);
  parallel_chunks(m, kGemmRowGrain, [&](index_t r0, index_t r1) {
    if (accumulate)
      C.middleRows(r0, r1 - r0).noalias() +=
          A.middleCols(r0, r1 - r0).transpose() * B;
    else
      C.middleRows(r0, r1 - r0).noalias() =
          A.middleCols(r0, r1 - r0).transpose() * B;
  });
}

// C[m x n] (+)= A[m x k] * B[n x k]^T
template <class T>
void gemm_a_bt(const T* a, index_t m, index_t k, const T* b, index_t n,
               T* out, bool accumulate) {
  MapCM<T> A(a, m, k);
  MapCM<T> B(b, n, k);
  MapM<T> C(out, m, n);
  parallel_chunks(m, kGemmRowGrain, [&](index_t r0, index_t r1) {
    if (accumulate)
      C.middleRows(r0, r1 - r0).noalias() +=
          A.middleRows(r0, r1 - r0) * B.transpose();
    else
      C.middleRows(r0, r1 - r0).noalias() =
          A.middleRows(r0, r1 - r0) * B.transpose();
  });
}

}  // namespace

ConvSpec ConvSpec::same(int dims, index_t cin, index_t cout, index_t k,
                        bool bias) {
  if (k < 1 || k % 2 == 0)
    throw config_error("conv: same-padding requires an odd kernel, got " +
                       std::to_string(k));
  ConvSpec s;
  s.dims = dims;
  s.in_channels = cin;
  s.out_channels = cout;
  for (int i = 0; i < dims; ++i) {
    s.kernel[static_cast<std::size_t>(i)] = k;
    s.stride[static_cast<std::size_t>(i)] = 1;
    s.pad[static_cast<std::size_t>(i)] = (k - 1) / 2;
  }
  s.has_bias = bias;
  s.validate();
  return s;
}

ConvSpec ConvSpec::down(int dims, index_t cin, index_t cout, bool bias) {
  ConvSpec s;
  s.dims = dims;
  s.in_channels = cin;
  s.out_channels = cout;
  for (int i = 0; i < dims; ++i) {
    s.kernel[static_cast<std::size_t>(i)] = 3;
    s.stride[static_cast<std::size_t>(i)] = 2;
    s.pad[static_cast<std::size_t>(i)] = 1;
  }
  s.has_bias = bias;
  s.validate();
  return s;
}

void ConvSpec::validate() const {
  if (dims < 1 || dims > 3)
    throw config_error("conv: spatial rank must be 1..3");
  if (in_channels < 1 || out_channels < 1)
    throw config_error("conv: channel counts must be positive");
  for (int i = 0; i < 3; ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (i >= dims) {
      if (kernel[u] != 1 || stride[u] != 1 || pad[u] != 0)
        throw config_error("conv: unused spatial dims must stay trivial");
      continue;
    }
    if (kernel[u] < 1) throw config_error("conv: kernel extent must be >= 1");
    if (stride[u] < 1) throw config_error("conv: stride must be >= 1");
    if (pad[u] < 0) throw config_error("conv: negative padding");
  }
}

index_t ConvSpec::kernel_numel() const {
  return kernel[0] * kernel[1] * kernel[2];
}

std::vector<index_t> ConvSpec::weight_shape() const {
  std::vector<index_t> s{out_channels, in_channels};
  for (int i = 0; i < dims; ++i)
    s.push_back(kernel[static_cast<std::size_t>(i)]);
  return s;
}

std::vector<index_t> ConvSpec::output_shape(
    const std::vector<index_t>& input) const {
  check_spatial_rank(input, dims, "conv");
  if (input[1] != in_channels)
    throw usage_error("conv: input has " + std::to_string(input[1]) +
                      " channels, spec expects " + std::to_string(in_channels));
  std::vector<index_t> out{input[0], out_channels};
  for (int i = 0; i < dims; ++i) {
    const auto u = static_cast<std::size_t>(i);
    const index_t padded = input[u + 2] + 2 * pad[u];
    if (padded < kernel[u])
      throw config_error("conv: padded input extent " + std::to_string(padded) +
                         " smaller than kernel " + std::to_string(kernel[u]) +
                         " on axis " + std::to_string(i));
    out.push_back((padded - kernel[u]) / stride[u] + 1);
  }
  return out;
}

TConvSpec TConvSpec::up2(int dims, index_t cin, index_t cout, bool bias) {
  TConvSpec s;
  s.dims = dims;
  s.in_channels = cin;
  s.out_channels = cout;
  for (int i = 0; i < dims; ++i) s.kernel[static_cast<std::size_t>(i)] = 2;
  s.has_bias = bias;
  s.validate();
  return s;
}

void TConvSpec::validate() const {
  if (dims < 1 || dims > 3)
    throw config_error("transposed conv: spatial rank must be 1..3");
  if (in_channels < 1 || out_channels < 1)
    throw config_error("transposed conv: channel counts must be positive");
  for (int i = 0; i < 3; ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (i >= dims) {
      if (kernel[u] != 1)
        throw config_error("transposed conv: unused dims must stay trivial");
      continue;
    }
    if (kernel[u] < 1)
      throw config_error("transposed conv: kernel extent must be >= 1");
  }
}

index_t TConvSpec::kernel_numel() const {
  return kernel[0] * kernel[1] * kernel[2];
}

std::vector<index_t> TConvSpec::weight_shape() const {
  std::vector<index_t> s{in_channels, out_channels};
  for (int i = 0; i < dims; ++i)
    s.push_back(kernel[static_cast<std::size_t>(i)]);
  return s;
}

std::vector<index_t> TConvSpec::output_shape(
    const std::vector<index_t>& input) const {
  check_spatial_rank(input, dims, "transposed conv");
  if (input[1] != in_channels)
    throw usage_error("transposed conv: input has " + std::to_string(input[1]) +
                      " channels, spec expects " + std::to_string(in_channels));
  std::vector<index_t> out{input[0], out_channels};
  for (int i = 0; i < dims; ++i)
    out.push_back(input[static_cast<std::size_t>(i) + 2] *
                  kernel[static_cast<std::size_t>(i)]);
  return out;
}

template <class T>
Tensor<T> conv_forward(const Tensor<T>& x, const Tensor<T>& w,
                       const Tensor<T>* bias, const ConvSpec& spec) {
  spec.validate();
  if (w.shape != spec.weight_shape())
    throw usage_error("conv: weight shape " + shape_string(w.shape) +
                      " does not match spec " +
                      shape_string(spec.weight_shape()));
  if (spec.has_bias) {
    if (bias == nullptr || bias->shape != std::vector<index_t>{spec.out_channels})
      throw usage_error("conv: bias missing or mis-shaped");
  } else if (bias != nullptr) {
    throw usage_error("conv: bias supplied but spec.has_bias is false");
  }
  const auto out_shape = spec.output_shape(x.shape);
  const Dims3 d = normalized_dims(x.shape, spec.dims, out_shape);
  const index_t B = x.dim(0);
  const index_t M = spec.out_channels;
  const index_t K = spec.in_channels * spec.kernel_numel();
  const index_t N = d.nout;

  Tensor<T> y(out_shape);
  std::vector<T> col(static_cast<std::size_t>(K * N));
  for (index_t b = 0; b < B; ++b) {
    im2col(x.data.data() + b * spec.in_channels * d.nin, spec, d, col.data());
    T* yb = y.data.data() + b * M * N;
    gemm_chunked(w.data.data(), M, K, col.data(), N, yb, false);
    if (spec.has_bias) {
      for (index_t co = 0; co < M; ++co) {
        const T bv = bias->data[static_cast<std::size_t>(co)];
        T* row = yb + co * N;
        for (index_t n = 0; n < N; ++n) row[n] += bv;
      }
    }
  }
  return y;
}

template <class T>
ConvGrads<T> conv_vjp(const Tensor<T>& x, const Tensor<T>& w,
                      const ConvSpec& spec, const Tensor<T>& grad_out,
                      bool need_input, bool need_weight, bool need_bias) {
  const auto out_shape = spec.output_shape(x.shape);
  if (grad_out.shape != out_shape)
    throw usage_error("conv backward: grad shape " +
                      shape_string(grad_out.shape) + " does not match output " +
                      shape_string(out_shape));
  const Dims3 d = normalized_dims(x.shape, spec.dims, out_shape);
  const index_t B = x.dim(0);
  const index_t M = spec.out_channels;
  const index_t K = spec.in_channels * spec.kernel_numel();
  const index_t N = d.nout;

  ConvGrads<T> gr;
  if (need_input) gr.input = Tensor<T>(x.shape);
  if (need_weight) gr.weight = Tensor<T>(w.shape);
  if (need_bias && spec.has_bias)
    gr.bias = Tensor<T>(std::vector<index_t>{M});

  std::vector<T> col;
  std::vector<T> colgrad;
  if (need_weight || need_input) col.resize(static_cast<std::size_t>(K * N));
  if (need_input) colgrad.resize(static_cast<std::size_t>(K * N));

  for (index_t b = 0; b < B; ++b) {
    const T* xb = x.data.data() + b * spec.in_channels * d.nin;
    const T* gb = grad_out.data.data() + b * M * N;
    if (need_weight) {
      im2col(xb, spec, d, col.data());
      gemm_a_bt(gb, M, N, col.data(), K, gr.weight->data.data(), b > 0);
    }
    if (need_input) {
      gemm_at_b(w.data.data(), M, K, gb, N, colgrad.data(), false);
      col2im_gather(colgrad.data(), spec, d,
                    gr.input->data.data() + b * spec.in_channels * d.nin);
    }
    if (gr.bias) {
      for (index_t co = 0; co < M; ++co) {
        double acc = 0.0;
        const T* row = gb + co * N;
        for (index_t n = 0; n < N; ++n) acc += static_cast<double>(row[n]);
        gr.bias->data[static_cast<std::size_t>(co)] += static_cast<T>(acc);
      }
    }
  }
  return gr;
}

template <class T>
Tensor<T> tconv_forward(const Tensor<T>& x, const Tensor<T>& w,
                        const Tensor<T>* bias, const TConvSpec& spec) {
  spec.validate();
  if (w.shape != spec.weight_shape())
    throw usage_error("transposed conv: weight shape " + shape_string(w.shape) +
                      " does not match spec " +
                      shape_string(spec.weight_shape()));
  if (spec.has_bias) {
    if (bias == nullptr ||
        bias->shape != std::vector<index_t>{spec.out_channels})
      throw usage_error("transposed conv: bias missing or mis-shaped");
  } else if (bias != nullptr) {
    throw usage_error("transposed conv: bias supplied but has_bias is false");
  }
  const auto out_shape = spec.output_shape(x.shape);
  const Dims3 d = normalized_dims(x.shape, spec.dims, out_shape);
  const index_t B = x.dim(0);
  const index_t Ci = spec.in_channels, Co = spec.out_channels;
  const index_t kvol = spec.kernel_numel();
  const index_t k1 = spec.kernel[1], k2 = spec.kernel[2];

  Tensor<T> y(out_shape);
  std::vector<T> wt(static_cast<std::size_t>(Co * Ci));
  std::vector<T> cls(static_cast<std::size_t>(Co * d.nin));
  for (index_t b = 0; b < B; ++b) {
    const T* xb = x.data.data() + b * Ci * d.nin;
    T* yb = y.data.data() + b * Co * d.nout;
    for (index_t t = 0; t < kvol; ++t) {
      // wt[co][ci] = w[ci][co][t]
      for (index_t ci = 0; ci < Ci; ++ci)
        for (index_t co = 0; co < Co; ++co)
          wt[static_cast<std::size_t>(co * Ci + ci)] =
              w.data[static_cast<std::size_t>((ci * Co + co) * kvol + t)];
      gemm_chunked(wt.data(), Co, Ci, xb, d.nin, cls.data(), false);
      // scatter class t onto the strided output lattice
      const index_t t2 = t % k2;
      const index_t t1 = (t / k2) % k1;
      const index_t t0 = t / (k1 * k2);
      parallel_chunks(Co, 1, [&](index_t c0, index_t c1) {
        for (index_t co = c0; co < c1; ++co) {
          const T bv =
              spec.has_bias ? bias->data[static_cast<std::size_t>(co)] : T(0);
          const T* src = cls.data() + co * d.nin;
          T* dst = yb + co * d.nout;
          index_t n = 0;
          for (index_t i0 = 0; i0 < d.in[0]; ++i0)
            for (index_t i1 = 0; i1 < d.in[1]; ++i1) {
              T* orow = dst + ((i0 * spec.kernel[0] + t0) * d.out[1] +
                               (i1 * spec.kernel[1] + t1)) *
                                  d.out[2] +
                        t2;
              for (index_t i2 = 0; i2 < d.in[2]; ++i2)
                orow[i2 * k2] = src[n + i2] + bv;
              n += d.in[2];
            }
        }
      });
    }
  }
  return y;
}

template <class T>
ConvGrads<T> tconv_vjp(const Tensor<T>& x, const Tensor<T>& w,
                       const TConvSpec& spec, const Tensor<T>& grad_out,
                       bool need_input, bool need_weight, bool need_bias) {
  const auto out_shape = spec.output_shape(x.shape);
  if (grad_out.shape != out_shape)
    throw usage_error("transposed conv backward: grad shape mismatch");
  const Dims3 d = normalized_dims(x.shape, spec.dims, out_shape);
  const index_t B = x.dim(0);
  const index_t Ci = spec.in_channels, Co = spec.out_channels;
  const index_t kvol = spec.kernel_numel();
  const index_t k1 = spec.kernel[1], k2 = spec.kernel[2];

  ConvGrads<T> gr;
  if (need_input) gr.input = Tensor<T>(x.shape);
  if (need_weight) gr.weight = Tensor<T>(w.shape);
  if (need_bias && spec.has_bias)
    gr.bias = Tensor<T>(std::vector<index_t>{Co});

  std::vector<T> gcls(static_cast<std::size_t>(Co * d.nin));
  std::vector<T> wt(static_cast<std::size_t>(Co * Ci));
  std::vector<T> gwt(static_cast<std::size_t>(Ci * Co));
  for (index_t b = 0; b < B; ++b) {
    const T* xb = x.data.data() + b * Ci * d.nin;
    const T* gb = grad_out.data.data() + b * Co * d.nout;
    for (index_t t = 0; t < kvol; ++t) {
      const index_t t2 = t % k2;
      const index_t t1 = (t / k2) % k1;
      const index_t t0 = t / (k1 * k2);
      // gather class-t gradient: gcls[co][i] = g(co, k*i + t)
      parallel_chunks(Co, 1, [&](index_t c0, index_t c1) {
        for (index_t co = c0; co < c1; ++co) {
          const T* src = gb + co * d.nout;
          T* dst = gcls.data() + co * d.nin;
          index_t n = 0;
          for (index_t i0 = 0; i0 < d.in[0]; ++i0)
            for (index_t i1 = 0; i1 < d.in[1]; ++i1) {
              const T* orow = src + ((i0 * spec.kernel[0] + t0) * d.out[1] +
                                     (i1 * spec.kernel[1] + t1)) *
                                        d.out[2] +
                              t2;
              for (index_t i2 = 0; i2 < d.in[2]; ++i2)
                dst[n + i2] = orow[i2 * k2];
              n += d.in[2];
            }
        }
      });
      if (need_input) {
        // gx += w(:,:,t)^T-free form: gx[ci] += sum_co w[ci,co,t] * gcls[co]
        for (index_t ci = 0; ci < Ci; ++ci)
          for (index_t co = 0; co < Co; ++co)
            wt[static_cast<std::size_t>(co * Ci + ci)] =
                w.data[static_cast<std::size_t>((ci * Co + co) * kvol + t)];
        gemm_at_b(wt.data(), Co, Ci, gcls.data(), d.nin,
                  gr.input->data.data() + b * Ci * d.nin, t > 0 || b > 0);
      }
      if (need_weight) {
        // gw[ci,co,t] = sum_i x[ci,i] * gcls[co,i]
        gemm_a_bt(xb, Ci, d.nin, gcls.data(), Co, gwt.data(), false);
        for (index_t ci = 0; ci < Ci; ++ci)
          for (index_t co = 0; co < Co; ++co)
            gr.weight->data[static_cast<std::size_t>((ci * Co + co) * kvol + t)] +=
                gwt[static_cast<std::size_t>(ci * Co + co)];
      }
    }
    if (gr.bias) {
      for (index_t co = 0; co < Co; ++co) {
        double acc = 0.0;
        const T* row = gb + co * d.nout;
        for (index_t n = 0; n < d.nout; ++n) acc += static_cast<double>(row[n]);
        gr.bias->data[static_cast<std::size_t>(co)] += static_cast<T>(acc);
      }
    }
  }
  return gr;
}

template <class T>
Var<T> conv(Graph<T>* g, const Var<T>& x, const Var<T>& w, const Var<T>& b,
            const ConvSpec& spec) {
  if (!x || !w) throw usage_error("conv: null input or weight");
  if (spec.has_bias && !b) throw usage_error("conv: spec requires a bias");
  if (!spec.has_bias && b)
    throw usage_error("conv: bias supplied but spec.has_bias is false");
  Tensor<T> y =
      conv_forward(x->value, w->value, b ? &b->value : nullptr, spec);
  std::vector<Var<T>> parents{x, w};
  if (b) parents.push_back(b);
  return op_result<T>(
      g, std::move(y), std::move(parents),
      [x, w, b, spec](Node<T>& self) {
        auto gr = conv_vjp(x->value, w->value, spec, self.grad, x->needs_grad,
                           w->needs_grad, b && b->needs_grad);
        if (gr.input) x->accumulate(std::move(*gr.input));
        if (gr.weight) w->accumulate(std::move(*gr.weight));
        if (gr.bias) b->accumulate(std::move(*gr.bias));
      },
      "conv");
}

template <class T>
Var<T> transposed_conv(Graph<T>* g, const Var<T>& x, const Var<T>& w,
                       const Var<T>& b, const TConvSpec& spec) {
  if (!x || !w) throw usage_error("transposed conv: null input or weight");
  if (spec.has_bias && !b)
    throw usage_error("transposed conv: spec requires a bias");
  if (!spec.has_bias && b)
    throw usage_error("transposed conv: bias supplied but has_bias is false");
  Tensor<T> y =
      tconv_forward(x->value, w->value, b ? &b->value : nullptr, spec);
  std::vector<Var<T>> parents{x, w};
  if (b) parents.push_back(b);
  return op_result<T>(
      g, std::move(y), std::move(parents),
      [x, w, b, spec](Node<T>& self) {
        auto gr = tconv_vjp(x->value, w->value, spec, self.grad, x->needs_grad,
                            w->needs_grad, b && b->needs_grad);
        if (gr.input) x->accumulate(std::move(*gr.input));
        if (gr.weight) w->accumulate(std::move(*gr.weight));
        if (gr.bias) b->accumulate(std::move(*gr.bias));
      },
      "transposed_conv");
}

#define LKREG_INSTANTIATE_CONV(T)                                             \
  template Tensor<T> conv_forward(const Tensor<T>&, const Tensor<T>&,         \
                                  const Tensor<T>*, const ConvSpec&);         \
  template ConvGrads<T> conv_vjp(const Tensor<T>&, const Tensor<T>&,          \
                                 const ConvSpec&, const Tensor<T>&, bool,     \
                                 bool, bool);                                 \
  template Tensor<T> tconv_forward(const Tensor<T>&, const Tensor<T>&,        \
                                   const Tensor<T>*, const TConvSpec&);       \
  template ConvGrads<T> tconv_vjp(const Tensor<T>&, const Tensor<T>&,         \
                                  const TConvSpec&, const Tensor<T>&, bool,   \
                                  bool, bool);                                \
  template Var<T> conv(Graph<T>*, const Var<T>&, const Var<T>&,               \
                       const Var<T>&, const ConvSpec&);                       \
  template Var<T> transposed_conv(Graph<T>*, const Var<T>&, const Var<T>&,    \
                                  const Var<T>&, const TConvSpec&);

LKREG_INSTANTIATE_CONV(float)
LKREG_INSTANTIATE_CONV(double)
#undef LKREG_INSTANTIATE_CONV

}  // namespace lkreg
