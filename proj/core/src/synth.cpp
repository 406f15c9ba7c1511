#include "lkreg/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "lkreg/metrics.hpp"
#include "lkreg/tensor_io.hpp"
#include "lkreg/warp.hpp"

namespace fs = std::filesystem;

namespace lkreg {

void SynthConfig::validate() const {
  if (count < 0) throw config_error("synth: count must be non-negative");
  const int D = static_cast<int>(extents.size());
  if (D != 2 && D != 3)
    throw config_error("synth: extents must have 2 or 3 dims");
  index_t mn = extents[0];
  for (index_t e : extents) {
    if (e < 8) throw config_error("synth: extents must be at least 8");
    mn = std::min(mn, e);
  }
  if (max_disp < 0) throw config_error("synth: max_disp must be >= 0");
  if (max_disp > static_cast<double>(mn) / 8.0)
    throw config_error("synth: max_disp must be at most min(extent)/8");
}

TensorF gaussian_smooth(const TensorF& x, double sigma) {
  if (sigma <= 0) return x;
  const index_t radius = static_cast<index_t>(std::ceil(3.0 * sigma));
  std::vector<float> kernel(static_cast<std::size_t>(2 * radius + 1));
  double norm = 0.0;
  for (index_t i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (static_cast<double>(i) / sigma) *
                              (static_cast<double>(i) / sigma));
    kernel[static_cast<std::size_t>(i + radius)] = static_cast<float>(w);
    norm += w;
  }
  for (auto& w : kernel) w = static_cast<float>(w / norm);

  const int sr = x.spatial_rank();
  TensorF cur = x;
  TensorF tmp(x.shape);
  const index_t lead = x.dim(0) * x.dim(1);
  for (int a = 0; a < sr; ++a) {
    index_t outer = lead, inner = 1;
    for (int i = 0; i < a; ++i) outer *= x.dim(2 + i);
    for (int i = a + 1; i < sr; ++i) inner *= x.dim(2 + i);
    const index_t len = x.dim(2 + a);
    for (index_t o = 0; o < outer; ++o) {
      const float* src = cur.data.data() + o * len * inner;
      float* dst = tmp.data.data() + o * len * inner;
      for (index_t i = 0; i < len; ++i)
        for (index_t c = 0; c < inner; ++c) {
          double acc = 0.0;
          for (index_t j = -radius; j <= radius; ++j) {
            const index_t q = i + j;
            if (q < 0 || q >= len) continue;
            acc += static_cast<double>(
                       kernel[static_cast<std::size_t>(j + radius)]) *
                   static_cast<double>(src[q * inner + c]);
          }
          dst[i * inner + c] = static_cast<float>(acc);
        }
    }
    std::swap(cur, tmp);
  }
  return cur;
}

namespace {

TensorF white_noise(Rng& rng, const std::vector<index_t>& shape) {
  TensorF t(shape);
  for (auto& v : t.data) v = static_cast<float>(rng.normal());
  return t;
}

void min_max_normalize(TensorF& t) {
  float lo = t.data[0], hi = t.data[0];
  for (float v : t.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi > lo)
    for (auto& v : t.data) v = (v - lo) / (hi - lo);
  else
    std::fill(t.data.begin(), t.data.end(), 0.0f);
}

}  // namespace

SynthPair make_synth_pair(Rng rng, const std::vector<index_t>& extents,
                          double max_disp) {
  const int D = static_cast<int>(extents.size());
  std::vector<index_t> img_shape{1, 1};
  std::vector<index_t> field_shape{1, D};
  index_t n = 1, min_ext = extents[0];
  for (index_t e : extents) {
    img_shape.push_back(e);
    field_shape.push_back(e);
    n *= e;
    min_ext = std::min(min_ext, e);
  }
  const double R = 0.5 * static_cast<double>(min_ext);

  // anatomy: anisotropic radial coordinate + smooth boundary perturbation
  std::vector<double> center(static_cast<std::size_t>(D));
  std::vector<double> aniso(static_cast<std::size_t>(D));
  for (int d = 0; d < D; ++d) {
    center[static_cast<std::size_t>(d)] =
        static_cast<double>(extents[static_cast<std::size_t>(d)]) *
        (0.5 + 0.05 * rng.uniform(-1.0, 1.0));
    aniso[static_cast<std::size_t>(d)] = 1.0 + 0.25 * rng.uniform(-1.0, 1.0);
  }
  TensorF perturb = gaussian_smooth(white_noise(rng, img_shape),
                                    static_cast<double>(min_ext) / 10.0);
  {
    float amax = 0.0f;
    for (float v : perturb.data) amax = std::max(amax, std::abs(v));
    const float target = static_cast<float>(0.10 * R);
    if (amax > 0)
      for (auto& v : perturb.data) v = v / amax * target;
  }

  const double shell_radii[4] = {0.30 * R, 0.48 * R, 0.66 * R, 0.85 * R};
  const float shell_intensity[5] = {0.06f, 0.72f, 0.30f, 0.88f, 0.48f};

  TensorF fixed(img_shape);
  TensorF labels(img_shape);
  std::vector<index_t> x(static_cast<std::size_t>(D));
  for (index_t v = 0; v < n; ++v) {
    index_t rem = v;
    for (int d = D - 1; d >= 0; --d) {
      x[static_cast<std::size_t>(d)] =
          rem % extents[static_cast<std::size_t>(d)];
      rem /= extents[static_cast<std::size_t>(d)];
    }
    double rho2 = 0.0;
    for (int d = 0; d < D; ++d) {
      const double dx = (static_cast<double>(x[static_cast<std::size_t>(d)]) -
                         center[static_cast<std::size_t>(d)]) /
                        aniso[static_cast<std::size_t>(d)];
      rho2 += dx * dx;
    }
    const double rho =
        std::sqrt(rho2) +
        static_cast<double>(perturb.data[static_cast<std::size_t>(v)]);
    int label = 0;
    if (rho < shell_radii[0])
      label = 4;
    else if (rho < shell_radii[1])
      label = 3;
    else if (rho < shell_radii[2])
      label = 2;
    else if (rho < shell_radii[3])
      label = 1;
    labels.data[static_cast<std::size_t>(v)] = static_cast<float>(label);
    fixed.data[static_cast<std::size_t>(v)] = shell_intensity[label];
  }

  // texture so the NCC term has local structure everywhere
  TensorF texture = gaussian_smooth(white_noise(rng, img_shape), 1.5);
  for (index_t v = 0; v < n; ++v)
    fixed.data[static_cast<std::size_t>(v)] +=
        0.15f * texture.data[static_cast<std::size_t>(v)];
  min_max_normalize(fixed);

  SynthPair pair;
  pair.fixed = std::move(fixed);
  pair.fixed_labels = std::move(labels);

  if (max_disp <= 0.0) {
    pair.moving = pair.fixed;
    pair.moving_labels = pair.fixed_labels;
    pair.gt_field = TensorF(field_shape);
    return pair;
  }

  TensorF vel = gaussian_smooth(white_noise(rng, field_shape),
                                static_cast<double>(min_ext) / 8.0);
  double vmax = 0.0;
  for (index_t v = 0; v < n; ++v) {
    double mag2 = 0.0;
    for (int d = 0; d < D; ++d) {
      const double c = static_cast<double>(
          vel.data[static_cast<std::size_t>(d * n + v)]);
      mag2 += c * c;
    }
    vmax = std::max(vmax, mag2);
  }
  vmax = std::sqrt(vmax);
  if (vmax > 0) {
    const float s = static_cast<float>(max_disp / vmax);
    for (auto& c : vel.data) c *= s;
  }

  TensorF neg_vel = vel;
  for (auto& c : neg_vel.data) c = -c;
  pair.gt_field = exp_velocity_tensor(vel, 7);
  const TensorF backward_field = exp_velocity_tensor(neg_vel, 7);
  pair.moving = warp_linear_forward(pair.fixed, backward_field);
  pair.moving_labels = warp_nearest(pair.fixed_labels, backward_field);

  if (max_disp >= 2.0) {
    const auto vocab = label_vocabulary(pair.fixed_labels);
    const DiceResult d = dice(pair.moving_labels, pair.fixed_labels, vocab);
    if (!(d.mean < 1.0))
      throw data_error(
          "synth: generated pair is degenerate (labels unchanged by warp)");
  }
  return pair;
}

std::vector<SynthPair> synth_dataset(const SynthConfig& cfg) {
  cfg.validate();
  Rng root(cfg.seed);
  std::vector<SynthPair> out;
  out.reserve(static_cast<std::size_t>(cfg.count));
  for (int i = 0; i < cfg.count; ++i) {
    SynthPair p = make_synth_pair(root.fork(static_cast<std::uint64_t>(i)),
                                  cfg.extents, cfg.max_disp);
    char buf[16];
    std::snprintf(buf, sizeof(buf), "pair_%04d", i);
    p.id = buf;
    out.push_back(std::move(p));
  }
  return out;
}

void write_synth_dataset(const SynthConfig& cfg, const std::string& out_dir) {
  const auto pairs = synth_dataset(cfg);
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw data_error("synth: cannot create directory " + out_dir);
  for (const auto& p : pairs) {
    const std::string dir = out_dir + "/" + p.id;
    fs::create_directories(dir, ec);
    if (ec) throw data_error("synth: cannot create directory " + dir);
    write_tns(dir + "/fixed.tns", p.fixed);
    write_tns(dir + "/moving.tns", p.moving);
    write_tns(dir + "/fixed_labels.tns", p.fixed_labels);
    write_tns(dir + "/moving_labels.tns", p.moving_labels);
    write_tns(dir + "/gt_field.tns", p.gt_field);
  }
}

}  // namespace lkreg
