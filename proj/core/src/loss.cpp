#include "lkreg/loss.hpp"

#include <cmath>

#include "lkreg/ops.hpp"
#include "lkreg/warp.hpp"

namespace lkreg {

void LossConfig::validate() const {
  if (lambda < 0) throw config_error("loss: lambda must be non-negative");
  if (ncc_window < 1 || ncc_window % 2 == 0)
    throw config_error("loss: ncc_window must be odd and positive");
  if (ncc_epsilon <= 0 || dice_epsilon <= 0)
    throw config_error("loss: epsilons must be positive");
  if (dice_weight < 0)
    throw config_error("loss: dice_weight must be non-negative");
}

template <class T>
Var<T> ncc(Graph<T>* g, const Var<T>& warped, const Var<T>& fixed,
           const LossConfig& cfg) {
  cfg.validate();
  if (!warped || !fixed) throw usage_error("ncc: null operand");
  if (!warped->value.same_shape(fixed->value))
    throw usage_error("ncc: shape mismatch");
  if (warped->value.dim(1) != 1)
    throw usage_error("ncc: expects single-channel images");
  const int D = warped->value.spatial_rank();
  if (D < 1 || D > 3) throw usage_error("ncc: spatial rank must be 1..3");
  const index_t r = (cfg.ncc_window - 1) / 2;
  std::array<index_t, 3> radii{0, 0, 0};
  index_t n = 1;
  for (int i = 0; i < D; ++i) {
    if (cfg.ncc_window > warped->value.dim(2 + i))
      throw config_error("ncc: window larger than image extent");
    radii[static_cast<std::size_t>(i)] = r;
    n *= cfg.ncc_window;
  }
  const T inv_n = static_cast<T>(1.0 / static_cast<double>(n));

  const Var<T>& I = warped;
  const Var<T>& J = fixed;
  auto SI = box_sum(g, I, radii);
  auto SJ = box_sum(g, J, radii);
  auto SII = box_sum(g, mul(g, I, I), radii);
  auto SJJ = box_sum(g, mul(g, J, J), radii);
  auto SIJ = box_sum(g, mul(g, I, J), radii);

  auto cross = sub(g, SIJ, scale(g, mul(g, SI, SJ), inv_n));
  auto var_i = sub(g, SII, scale(g, mul(g, SI, SI), inv_n));
  auto var_j = sub(g, SJJ, scale(g, mul(g, SJ, SJ), inv_n));
  auto cc = div(g, mul(g, cross, cross),
                add_scalar(g, mul(g, var_i, var_j),
                           static_cast<T>(cfg.ncc_epsilon)));
  return mean(g, cc);
}

template <class T>
Var<T> diffusion_regularizer(Graph<T>* g, const Var<T>& field) {
  if (!field) throw usage_error("diffusion: null field");
  const Tensor<T>& f = field->value;
  const int D = f.spatial_rank();
  if (D < 1 || D > 3)
    throw usage_error("diffusion: spatial rank must be 1..3");
  std::array<index_t, 3> ext{1, 1, 1};
  for (int i = 0; i < D; ++i)
    ext[static_cast<std::size_t>(i)] = f.dim(2 + i);
  const index_t nspatial = ext[0] * ext[1] * ext[2];
  const index_t nchan = f.dim(0) * f.dim(1);
  const index_t numel = f.numel();

  auto axis_stride = [&](int a) {
    index_t s = 1;
    for (int d = D - 1; d > a; --d) s *= ext[static_cast<std::size_t>(d)];
    return s;
  };

  double acc = 0.0;
  for (index_t c = 0; c < nchan; ++c) {
    const T* plane = f.data.data() + c * nspatial;
    for (int a = 0; a < D; ++a) {
      const index_t stride = axis_stride(a);
      const index_t len = ext[static_cast<std::size_t>(a)];
      for (index_t v = 0; v < nspatial; ++v) {
        const index_t ia = (v / stride) % len;
        if (ia + 1 >= len) continue;
        const double d = static_cast<double>(plane[v + stride]) -
                         static_cast<double>(plane[v]);
        acc += d * d;
      }
    }
  }
  acc /= static_cast<double>(numel);

  return op_result<T>(
      g, Tensor<T>::scalar(static_cast<T>(acc)), {field},
      [field, ext, nspatial, nchan, numel, D](Node<T>& self) {
        if (!field->needs_grad) return;
        const T gscale =
            self.grad.data[0] * static_cast<T>(2.0 / static_cast<double>(numel));
        Tensor<T> gf(field->value.shape);
        const Tensor<T>& f = field->value;
        for (index_t c = 0; c < nchan; ++c) {
          const T* plane = f.data.data() + c * nspatial;
          T* gplane = gf.data.data() + c * nspatial;
          for (int a = 0; a < D; ++a) {
            index_t stride = 1;
            for (int d = D - 1; d > a; --d)
              stride *= ext[static_cast<std::size_t>(d)];
            const index_t len = ext[static_cast<std::size_t>(a)];
            for (index_t v = 0; v < nspatial; ++v) {
              const index_t ia = (v / stride) % len;
              T gv = T(0);
              if (ia + 1 < len) gv -= plane[v + stride] - plane[v];
              if (ia > 0) gv += plane[v] - plane[v - stride];
              gplane[v] += gscale * gv;
            }
          }
        }
        field->accumulate(std::move(gf));
      },
      "diffusion_regularizer");
}

template <class T>
Var<T> soft_dice_loss(Graph<T>* g, const Var<T>& warped_onehot,
                      const Var<T>& fixed_onehot, double eps) {
  if (!warped_onehot || !fixed_onehot)
    throw usage_error("soft_dice: null operand");
  const Tensor<T>& p = warped_onehot->value;
  const Tensor<T>& q = fixed_onehot->value;
  if (!p.same_shape(q))
    throw usage_error("soft_dice: label channel count or shape mismatch: " +
                      shape_string(p.shape) + " vs " + shape_string(q.shape));
  const index_t L = p.dim(1);
  const index_t n = p.spatial_numel();

  std::vector<double> num(static_cast<std::size_t>(L)),
      den(static_cast<std::size_t>(L));
  double dice_sum = 0.0;
  for (index_t l = 0; l < L; ++l) {
    const T* pp = p.data.data() + l * n;
    const T* qq = q.data.data() + l * n;
    double spq = 0.0, sp = 0.0, sq = 0.0;
    for (index_t i = 0; i < n; ++i) {
      spq += static_cast<double>(pp[i]) * static_cast<double>(qq[i]);
      sp += static_cast<double>(pp[i]);
      sq += static_cast<double>(qq[i]);
    }
    num[static_cast<std::size_t>(l)] = 2.0 * spq + eps;
    den[static_cast<std::size_t>(l)] = sp + sq + eps;
    dice_sum += num[static_cast<std::size_t>(l)] /
                den[static_cast<std::size_t>(l)];
  }
  const double loss = 1.0 - dice_sum / static_cast<double>(L);

  return op_result<T>(
      g, Tensor<T>::scalar(static_cast<T>(loss)),
      {warped_onehot, fixed_onehot},
      [warped_onehot, fixed_onehot, num, den, L, n](Node<T>& self) {
        const T g0 = self.grad.data[0];
        const double invL = 1.0 / static_cast<double>(L);
        auto backprop = [&](const Var<T>& target, const Var<T>& other) {
          if (!target->needs_grad) return;
          Tensor<T> gt(target->value.shape);
          for (index_t l = 0; l < L; ++l) {
            const double nl = num[static_cast<std::size_t>(l)];
            const double dl = den[static_cast<std::size_t>(l)];
            const T* ov = other->value.data.data() + l * n;
            T* gv = gt.data.data() + l * n;
            for (index_t i = 0; i < n; ++i) {
              const double d_dice =
                  (2.0 * static_cast<double>(ov[i]) * dl - nl) / (dl * dl);
              gv[i] = g0 * static_cast<T>(-invL * d_dice);
            }
          }
          target->accumulate(std::move(gt));
        };
        backprop(warped_onehot, fixed_onehot);
        backprop(fixed_onehot, warped_onehot);
      },
      "soft_dice_loss");
}

template <class T>
RegistrationLoss<T> registration_loss(Graph<T>* g, const Var<T>& net_out,
                                      const Var<T>& moving,
                                      const Var<T>& fixed, bool diffeomorphic,
                                      int squaring_steps, const LossConfig& cfg,
                                      const Var<T>& moving_onehot,
                                      const Var<T>& fixed_onehot) {
  cfg.validate();
  RegistrationLoss<T> out;
  Var<T> disp = net_out;
  if (diffeomorphic) disp = exp_velocity(g, net_out, squaring_steps);
  out.displacement = disp;
  out.warped = warp(g, moving, disp);

  auto ncc_v = ncc(g, out.warped, fixed, cfg);
  const Var<T>& reg_field =
      (cfg.regularize_target == LossConfig::RegularizeTarget::velocity)
          ? net_out
          : disp;
  auto reg_v = diffusion_regularizer(g, reg_field);
  Var<T> total = add(g, scale(g, ncc_v, T(-1)),
                     scale(g, reg_v, static_cast<T>(cfg.lambda)));

  out.parts.ncc = static_cast<double>(ncc_v->value.data[0]);
  out.parts.reg = static_cast<double>(reg_v->value.data[0]);
  if (cfg.dice_weight > 0.0) {
    if (!moving_onehot || !fixed_onehot)
      throw usage_error("loss: dice requested without label maps");
    auto warped_labels = warp(g, moving_onehot, disp);
    auto dice_v =
        soft_dice_loss(g, warped_labels, fixed_onehot, cfg.dice_epsilon);
    total = add(g, total, scale(g, dice_v, static_cast<T>(cfg.dice_weight)));
    out.parts.dice = static_cast<double>(dice_v->value.data[0]);
    out.parts.has_dice = true;
  }
  out.total = total;
  out.parts.total = static_cast<double>(total->value.data[0]);
  return out;
}

#define LKREG_INSTANTIATE_LOSS(T)                                            \
  template Var<T> ncc(Graph<T>*, const Var<T>&, const Var<T>&,               \
                      const LossConfig&);                                    \
  template Var<T> diffusion_regularizer(Graph<T>*, const Var<T>&);           \
  template Var<T> soft_dice_loss(Graph<T>*, const Var<T>&, const Var<T>&,    \
                                 double);                                    \
  template RegistrationLoss<T> registration_loss(                           \
      Graph<T>*, const Var<T>&, const Var<T>&, const Var<T>&, bool, int,    \
      const LossConfig&, const Var<T>&, const Var<T>&);

LKREG_INSTANTIATE_LOSS(float)
LKREG_INSTANTIATE_LOSS(double)
#undef LKREG_INSTANTIATE_LOSS

}  // namespace lkreg
