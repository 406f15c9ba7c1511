#include "lkreg/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "lkreg/ops.hpp"
#include "lkreg/warp.hpp"

namespace lkreg {

namespace {

int label_at(const TensorF& t, index_t i) {
  return static_cast<int>(std::lround(t.data[static_cast<std::size_t>(i)]));
}

void check_label_map(const TensorF& t, const char* what) {
  if (t.rank() < 3 || t.dim(0) != 1 || t.dim(1) != 1)
    throw usage_error(std::string(what) + ": label map must be [1,1,spatial]");
}

std::array<index_t, 3> spatial_of(const TensorF& t) {
  std::array<index_t, 3> e{1, 1, 1};
  for (int i = 0; i < t.spatial_rank(); ++i)
    e[static_cast<std::size_t>(i)] = t.dim(2 + i);
  return e;
}

// Foreground voxels of `label` with a background face-neighbor; voxels on
// the volume border count as boundary when their outside face is exposed.
std::vector<std::array<index_t, 3>> boundary_voxels(const TensorF& m,
                                                    int label) {
  const int D = m.spatial_rank();
  const auto ext = spatial_of(m);
  const index_t n = ext[0] * ext[1] * ext[2];
  std::vector<std::array<index_t, 3>> out;
  for (index_t v = 0; v < n; ++v) {
    if (label_at(m, v) != label) continue;
    std::array<index_t, 3> x{0, 0, 0};
    index_t rem = v;
    for (int d = D - 1; d >= 0; --d) {
      x[static_cast<std::size_t>(d)] = rem % ext[static_cast<std::size_t>(d)];
      rem /= ext[static_cast<std::size_t>(d)];
    }
    bool is_boundary = false;
    for (int d = 0; d < D && !is_boundary; ++d) {
      index_t stride = 1;
      for (int e = D - 1; e > d; --e)
        stride *= ext[static_cast<std::size_t>(e)];
      const index_t i = x[static_cast<std::size_t>(d)];
      if (i == 0 || label_at(m, v - stride) != label) is_boundary = true;
      if (!is_boundary &&
          (i + 1 == ext[static_cast<std::size_t>(d)] ||
           label_at(m, v + stride) != label))
        is_boundary = true;
    }
    if (is_boundary) out.push_back(x);
  }
  return out;
}

double nearest_distance(const std::array<index_t, 3>& p,
                        const std::vector<std::array<index_t, 3>>& set) {
  index_t best = std::numeric_limits<index_t>::max();
  for (const auto& q : set) {
    index_t d2 = 0;
    for (int d = 0; d < 3; ++d) {
      const index_t dd = p[static_cast<std::size_t>(d)] -
                         q[static_cast<std::size_t>(d)];
      d2 += dd * dd;
    }
    best = std::min(best, d2);
  }
  return std::sqrt(static_cast<double>(best));
}

}  // namespace

std::vector<int> label_vocabulary(const TensorF& labels) {
  check_label_map(labels, "label_vocabulary");
  std::set<int> s;
  for (index_t i = 0; i < labels.numel(); ++i) {
    const int l = label_at(labels, i);
    if (l != 0) s.insert(l);
  }
  return std::vector<int>(s.begin(), s.end());
}

TensorF one_hot(const TensorF& labels, const std::vector<int>& vocabulary) {
  check_label_map(labels, "one_hot");
  std::vector<index_t> shape = labels.shape;
  shape[1] = static_cast<index_t>(vocabulary.size());
  TensorF out(shape);
  const index_t n = labels.spatial_numel();
  for (std::size_t li = 0; li < vocabulary.size(); ++li) {
    const int l = vocabulary[li];
    float* plane = out.data.data() + static_cast<index_t>(li) * n;
    for (index_t i = 0; i < n; ++i)
      plane[i] = label_at(labels, i) == l ? 1.0f : 0.0f;
  }
  return out;
}

DiceResult dice(const TensorF& a, const TensorF& b,
                const std::vector<int>& vocabulary) {
  check_label_map(a, "dice");
  check_label_map(b, "dice");
  if (!a.same_shape(b)) throw usage_error("dice: shape mismatch");
  if (vocabulary.empty()) throw usage_error("dice: empty vocabulary");

  DiceResult r;
  r.labels = vocabulary;
  double sum = 0.0;
  int counted = 0;
  for (int l : vocabulary) {
    index_t na = 0, nb = 0, ninter = 0;
    for (index_t i = 0; i < a.numel(); ++i) {
      const bool ia = label_at(a, i) == l;
      const bool ib = label_at(b, i) == l;
      na += ia;
      nb += ib;
      ninter += ia && ib;
    }
    if (na == 0 && nb == 0) {
      r.per_label.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double d = 2.0 * static_cast<double>(ninter) /
                     static_cast<double>(na + nb);
    r.per_label.push_back(d);
    sum += d;
    ++counted;
  }
  r.mean = counted > 0 ? sum / counted : 0.0;
  return r;
}

double percentile(std::vector<double> values, double p) {
  if (values.empty()) throw usage_error("percentile: empty sample");
  std::sort(values.begin(), values.end());
  if (values.size() == 1) return values[0];
  const double rank = p / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(rank));
  const double frac = rank - std::floor(rank);
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] * (1.0 - frac) + values[lo + 1] * frac;
}

std::optional<double> hausdorff95(const TensorF& a, const TensorF& b,
                                  int label) {
  check_label_map(a, "hausdorff95");
  check_label_map(b, "hausdorff95");
  if (!a.same_shape(b)) throw usage_error("hausdorff95: shape mismatch");
  const auto ba = boundary_voxels(a, label);
  const auto bb = boundary_voxels(b, label);
  if (ba.empty() || bb.empty()) return std::nullopt;
  std::vector<double> dists;
  dists.reserve(ba.size() + bb.size());
  for (const auto& p : ba) dists.push_back(nearest_distance(p, bb));
  for (const auto& q : bb) dists.push_back(nearest_distance(q, ba));
  return percentile(std::move(dists), 95.0);
}

DisplacementStats displacement_statistics(const std::vector<TensorF>& fields) {
  if (fields.empty())
    throw usage_error("displacement_statistics: empty collection");
  const int D = static_cast<int>(fields.front().dim(1));
  for (const auto& f : fields)
    if (!f.same_shape(fields.front()))
      throw usage_error("displacement_statistics: inconsistent shapes");
  DisplacementStats s;
  s.mean_abs.assign(static_cast<std::size_t>(D), 0.0);
  const index_t n = fields.front().spatial_numel();
  for (const auto& f : fields)
    for (int d = 0; d < D; ++d) {
      const float* plane = f.data.data() + d * n;
      double acc = 0.0;
      for (index_t i = 0; i < n; ++i)
        acc += std::abs(static_cast<double>(plane[i]));
      s.mean_abs[static_cast<std::size_t>(d)] += acc;
    }
  for (double& v : s.mean_abs)
    v /= static_cast<double>(n) * static_cast<double>(fields.size());
  return s;
}

void write_quiver(const std::string& path, const TensorF& field,
                  index_t stride) {
  if (stride < 1) throw usage_error("quiver: stride must be positive");
  const int D = field.spatial_rank();
  if (field.dim(1) != D)
    throw usage_error("quiver: field channel count must match spatial rank");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw data_error("quiver: cannot open " + path);
  const auto ext = spatial_of(field);
  const index_t n = field.spatial_numel();
  std::array<index_t, 3> x{0, 0, 0};
  for (index_t v = 0; v < n; ++v) {
    index_t rem = v;
    for (int d = D - 1; d >= 0; --d) {
      x[static_cast<std::size_t>(d)] = rem % ext[static_cast<std::size_t>(d)];
      rem /= ext[static_cast<std::size_t>(d)];
    }
    bool on_grid = true;
    for (int d = 0; d < D; ++d)
      if (x[static_cast<std::size_t>(d)] % stride != 0) on_grid = false;
    if (!on_grid) continue;
    for (int d = 0; d < D; ++d) out << x[static_cast<std::size_t>(d)] << " ";
    for (int d = 0; d < D; ++d) {
      out << static_cast<double>(field.data[static_cast<std::size_t>(d * n + v)]);
      out << (d + 1 < D ? " " : "");
    }
    out << "\n";
  }
}

EvaluationArtifacts evaluate_pair(const Network<float>& net,
                                  const TensorF& fixed, const TensorF& moving,
                                  const std::optional<TensorF>& fixed_labels,
                                  const std::optional<TensorF>& moving_labels,
                                  const std::string& pair_id,
                                  const std::string& checkpoint_id) {
  if (!fixed.same_shape(moving))
    throw config_error("evaluate: fixed/moving shape mismatch");
  EvaluationArtifacts out;
  MetricsRecord& rec = out.record;
  rec.pair_id = pair_id;
  rec.checkpoint_id = checkpoint_id;
  rec.config_hash = net.config().hash();

  const auto t0 = std::chrono::steady_clock::now();
  const Var<float> input =
      concat<float>(nullptr, 1, make_constant(fixed), make_constant(moving));
  Var<float> u = net.displacement(nullptr, input);
  out.field = u->value;
  out.warped = warp_linear_forward(moving, u->value);
  const auto t1 = std::chrono::steady_clock::now();
  rec.runtime_ms =
      std::chrono::duration<double, std::milli>(t1 - t0).count();

  rec.fold_pct = fold_fraction(u->value);
  rec.sdlogj = sd_log_jacobian(u->value);

  if (fixed_labels && moving_labels) {
    out.warped_labels = warp_nearest(*moving_labels, u->value);
    std::vector<int> vocab = label_vocabulary(*fixed_labels);
    for (int l : label_vocabulary(*moving_labels))
      if (std::find(vocab.begin(), vocab.end(), l) == vocab.end())
        vocab.insert(std::lower_bound(vocab.begin(), vocab.end(), l), l);
    const DiceResult d = dice(*out.warped_labels, *fixed_labels, vocab);
    rec.labels = d.labels;
    rec.dice_per_label = d.per_label;
    rec.dice_mean = d.mean;
    rec.has_dice = true;
    double hd_sum = 0.0;
    int hd_count = 0;
    for (int l : vocab) {
      const auto h = hausdorff95(*out.warped_labels, *fixed_labels, l);
      rec.hd95_per_label.push_back(
          h ? *h : std::numeric_limits<double>::quiet_NaN());
      if (h) {
        hd_sum += *h;
        ++hd_count;
      }
    }
    if (hd_count > 0) {
      rec.hd95_mean = hd_sum / hd_count;
      rec.has_hd95 = true;
    }
  }
  return out;
}

std::string metrics_csv_header(const std::vector<int>& vocabulary) {
  std::ostringstream os;
  os << "pair_id,dice_mean";
  for (int l : vocabulary) os << ",dice_" << l;
  os << ",fold_pct,sdlogj,hd95_mean,runtime_ms";
  return os.str();
}

std::string metrics_csv_row(const MetricsRecord& r) {
  std::ostringstream os;
  auto num = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return std::string(buf);
  };
  os << r.pair_id << "," << num(r.dice_mean);
  for (double d : r.dice_per_label)
    os << "," << (std::isnan(d) ? "" : num(d));
  os << "," << num(r.fold_pct) << "," << num(r.sdlogj) << ","
     << num(r.hd95_mean) << "," << num(r.runtime_ms);
  return os.str();
}

}  // namespace lkreg
