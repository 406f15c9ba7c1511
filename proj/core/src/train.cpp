#include "lkreg/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lkreg/checkpoint.hpp"
#include "lkreg/metrics.hpp"
#include "lkreg/ops.hpp"
#include "lkreg/optim.hpp"
#include "lkreg/tensor_io.hpp"
#include "lkreg/warp.hpp"

namespace fs = std::filesystem;

namespace lkreg {

void TrainConfig::validate() const {
  net.validate();
  loss.validate();
  if (lr <= 0) throw config_error("train: lr must be positive");
  if (batch_size != 1)
    throw config_error("train: batch_size must be 1");
  if (iterations < 0) throw config_error("train: iterations must be >= 0");
  if (checkpoint_interval < 0)
    throw config_error("train: checkpoint_interval must be >= 0");
}

TrainConfig TrainConfig::from_kv(const std::map<std::string, std::string>& kv) {
  TrainConfig c;
  std::map<std::string, std::string> net_kv;
  auto get_double = [&](const std::string& key, double& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    try {
      out = std::stod(it->second);
    } catch (const std::exception&) {
      throw config_error("train config: bad number for " + key);
    }
  };
  auto get_int = [&](const std::string& key, index_t& out) {
    auto it = kv.find(key);
    if (it == kv.end()) return;
    try {
      out = std::stoll(it->second);
    } catch (const std::exception&) {
      throw config_error("train config: bad integer for " + key);
    }
  };
  for (const auto& [key, value] : kv)
    if (key.rfind("net.", 0) == 0) net_kv[key.substr(4)] = value;
  if (!net_kv.empty()) c.net = NetConfig::from_kv(net_kv);

  get_double("lr", c.lr);
  index_t bs = 1;
  get_int("batch_size", bs);
  c.batch_size = static_cast<int>(bs);
  get_int("iterations", c.iterations);
  index_t seed = static_cast<index_t>(c.seed);
  get_int("seed", seed);
  c.seed = static_cast<std::uint64_t>(seed);
  get_int("checkpoint_interval", c.checkpoint_interval);
  get_double("adam_beta1", c.adam_beta1);
  get_double("adam_beta2", c.adam_beta2);
  get_double("adam_eps", c.adam_eps);

  get_double("loss.lambda", c.loss.lambda);
  get_int("loss.ncc_window", c.loss.ncc_window);
  get_double("loss.ncc_epsilon", c.loss.ncc_epsilon);
  get_double("loss.dice_weight", c.loss.dice_weight);
  get_double("loss.dice_epsilon", c.loss.dice_epsilon);
  auto it = kv.find("loss.regularize_target");
  if (it != kv.end()) {
    if (it->second == "displacement")
      c.loss.regularize_target = LossConfig::RegularizeTarget::displacement;
    else if (it->second == "velocity")
      c.loss.regularize_target = LossConfig::RegularizeTarget::velocity;
    else
      throw config_error("train config: regularize_target must be "
                         "displacement or velocity");
  }
  c.validate();
  return c;
}

void normalize_intensity(TensorF& t) {
  float lo = t.data[0], hi = t.data[0];
  for (float v : t.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi > lo) {
    for (auto& v : t.data) v = (v - lo) / (hi - lo);
  } else {
    std::fill(t.data.begin(), t.data.end(), 0.0f);
  }
}

std::vector<RegistrationPair> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir))
    throw data_error("dataset: " + dir + " is not a directory");
  std::vector<std::string> pair_dirs;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_directory() &&
        entry.path().filename().string().rfind("pair_", 0) == 0)
      pair_dirs.push_back(entry.path().string());
  std::sort(pair_dirs.begin(), pair_dirs.end());
  if (pair_dirs.empty())
    throw data_error("dataset: no pair_* directories under " + dir);

  std::vector<RegistrationPair> out;
  for (const auto& pd : pair_dirs) {
    RegistrationPair p;
    p.id = fs::path(pd).filename().string();
    p.fixed = read_tns<float>(pd + "/fixed.tns");
    p.moving = read_tns<float>(pd + "/moving.tns");
    if (!p.fixed.same_shape(p.moving))
      throw data_error("dataset: fixed/moving extents differ in " + pd);
    normalize_intensity(p.fixed);
    normalize_intensity(p.moving);
    if (fs::exists(pd + "/fixed_labels.tns"))
      p.fixed_labels = read_tns<float>(pd + "/fixed_labels.tns");
    if (fs::exists(pd + "/moving_labels.tns"))
      p.moving_labels = read_tns<float>(pd + "/moving_labels.tns");
    if (fs::exists(pd + "/gt_field.tns"))
      p.gt_field = read_tns<float>(pd + "/gt_field.tns");
    out.push_back(std::move(p));
  }
  return out;
}

namespace {

std::string checkpoint_dir_name(const std::string& out_dir, index_t iter,
                                bool final) {
  if (final) return out_dir + "/checkpoint_final";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "/checkpoint_%06lld",
                static_cast<long long>(iter));
  return out_dir + buf;
}

std::string loss_csv_line(index_t iter, const LossBreakdown& parts) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "%lld,%.10g,%.10g,%.10g,%.10g",
                static_cast<long long>(iter), parts.total, parts.ncc,
                parts.reg, parts.has_dice ? parts.dice : 0.0);
  return buf;
}

}  // namespace

TrainResult train_network(const TrainConfig& cfg,
                          const std::vector<RegistrationPair>& pairs,
                          Network<float>& net) {
  cfg.validate();
  if (pairs.empty()) throw data_error("train: empty dataset");

  const bool want_dice = cfg.loss.dice_weight > 0.0;
  // Per-pair stacked inputs and (optionally) one-hot label tensors.
  std::vector<Var<float>> inputs, mov1h, fix1h;
  for (const auto& p : pairs) {
    inputs.push_back(concat<float>(nullptr, 1, make_constant(p.fixed),
                                   make_constant(p.moving)));
    if (want_dice) {
      if (!p.fixed_labels || !p.moving_labels)
        throw usage_error("train: dice_weight > 0 but dataset has no labels");
      std::vector<int> vocab = label_vocabulary(*p.fixed_labels);
      for (int l : label_vocabulary(*p.moving_labels))
        if (std::find(vocab.begin(), vocab.end(), l) == vocab.end())
          vocab.insert(std::lower_bound(vocab.begin(), vocab.end(), l), l);
      mov1h.push_back(make_constant(one_hot(*p.moving_labels, vocab)));
      fix1h.push_back(make_constant(one_hot(*p.fixed_labels, vocab)));
    }
  }

  TrainResult result;
  std::ofstream log;
  if (!cfg.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    if (ec) throw data_error("train: cannot create out dir " + cfg.out_dir);
    result.loss_log_path = cfg.out_dir + "/loss_log.csv";
    log.open(result.loss_log_path, std::ios::trunc);
    if (!log) throw data_error("train: cannot open " + result.loss_log_path);
    log << "iter,total,ncc,reg,dice\n";
  }

  Adam<float> adam(cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  std::string last_checkpoint = "none";
  net.zero_grad();

  for (index_t it = 1; it <= cfg.iterations; ++it) {
    const std::size_t pi =
        static_cast<std::size_t>((it - 1) % static_cast<index_t>(pairs.size()));
    Graph<float> graph;
    Var<float> out = net.forward(&graph, inputs[pi]);
    auto loss = registration_loss(
        &graph, out, make_constant(pairs[pi].moving),
        make_constant(pairs[pi].fixed), net.config().diffeomorphic,
        net.config().squaring_steps, cfg.loss,
        want_dice ? mov1h[pi] : Var<float>(),
        want_dice ? fix1h[pi] : Var<float>());
    if (!std::isfinite(loss.parts.total))
      throw numeric_error("train: loss diverged (non-finite) at iteration " +
                          std::to_string(it) + "; last good checkpoint: " +
                          last_checkpoint);
    graph.backward(loss.total);
    try {
      adam.step(net.parameters());
    } catch (const numeric_error& e) {
      throw numeric_error(std::string(e.what()) +
                          "; last good checkpoint: " + last_checkpoint);
    }
    net.zero_grad();

    result.history.push_back(IterationLog{it, loss.parts});
    if (log.is_open()) log << loss_csv_line(it, loss.parts) << "\n";
    if (!cfg.out_dir.empty() && cfg.checkpoint_interval > 0 &&
        it % cfg.checkpoint_interval == 0) {
      const std::string dir = checkpoint_dir_name(cfg.out_dir, it, false);
      save_checkpoint(dir, net);
      last_checkpoint = dir;
    }
  }

  if (!cfg.out_dir.empty()) {
    result.checkpoint_dir = checkpoint_dir_name(cfg.out_dir, 0, true);
    save_checkpoint(result.checkpoint_dir, net);
  }
  return result;
}

TrainResult train(const TrainConfig& cfg) {
  cfg.validate();
  const auto pairs = load_dataset(cfg.data_dir);
  Rng rng(cfg.seed);
  Network<float> net(cfg.net, rng);
  return train_network(cfg, pairs, net);
}

RegisterResult register_pair(const Network<float>& net, const TensorF& fixed,
                             const TensorF& moving) {
  if (!fixed.same_shape(moving))
    throw config_error("register: fixed/moving extents differ: " +
                       shape_string(fixed.shape) + " vs " +
                       shape_string(moving.shape));
  RegisterResult r;
  const auto t0 = std::chrono::steady_clock::now();
  const Var<float> input =
      concat<float>(nullptr, 1, make_constant(fixed), make_constant(moving));
  Var<float> u = net.displacement(nullptr, input);
  r.field = u->value;
  r.warped = warp_linear_forward(moving, u->value);
  const auto t1 = std::chrono::steady_clock::now();
  r.runtime_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
  r.fold_pct = fold_fraction(u->value);
  return r;
}

}  // namespace lkreg
