#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "lkreg/checkpoint.hpp"
#include "lkreg/metrics.hpp"
#include "lkreg/ops.hpp"
#include "lkreg/optim.hpp"
#include "lkreg/parallel.hpp"
#include "lkreg/synth.hpp"
#include "lkreg/train.hpp"
#include "lkreg/warp.hpp"
#include "support/reference.hpp"

using namespace lkreg;
using namespace lkreg::testing;
namespace fs = std::filesystem;

namespace {

std::string temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "lkreg_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

TrainConfig small_train_cfg(index_t iters, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.net = NetConfig::lku(2, 2, 5);
  cfg.loss.lambda = 1.0;
  cfg.loss.ncc_window = 9;
  cfg.iterations = iters;
  cfg.seed = seed;
  return cfg;
}

bool same_params(const Network<float>& a, const Network<float>& b) {
  const auto& pa = a.parameters();
  const auto& pb = b.parameters();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    if (pa[i].name != pb[i].name) return false;
    if (pa[i].var->value.shape != pb[i].var->value.shape) return false;
    if (std::memcmp(pa[i].var->value.data.data(), pb[i].var->value.data.data(),
                    pa[i].var->value.data.size() * sizeof(float)) != 0)
      return false;
  }
  return true;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged") {
  Rng rng(1);
  std::vector<Param<double>> params;
  params.push_back(
      Param<double>{"w", make_leaf(random_tensor<double>(rng, {4}), true)});
  const auto before = params[0].var->value.data;
  params[0].var->zero_grad();
  Adam<double> adam(0.1);
  adam.step(params);
  CHECK(params[0].var->value.data == before);
}

TEST_CASE("adam: constant gradient drives steps toward lr * sign(g)") {
  std::vector<Param<double>> params;
  params.push_back(Param<double>{"w", make_leaf(TensorD::scalar(0.0), true)});
  Adam<double> adam(0.01);
  double prev = 0.0;
  double step = 0.0;
  for (int i = 0; i < 600; ++i) {
    params[0].var->zero_grad();
    params[0].var->grad.data[0] = -3.7;  // constant gradient
    adam.step(params);
    step = params[0].var->value.data[0] - prev;
    prev = params[0].var->value.data[0];
  }
  CHECK(step == doctest::Approx(0.01).epsilon(1e-3));  // lr * sign
}

TEST_CASE("adam: 10 steps on f(w)=w^2 match the hand recursion") {
  // independent scalar recursion
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  double w_ref = 1.0, m = 0.0, v = 0.0;
  for (int t = 1; t <= 10; ++t) {
    const double g = 2.0 * w_ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mhat = m / (1 - std::pow(b1, t));
    const double vhat = v / (1 - std::pow(b2, t));
    w_ref -= lr * mhat / (std::sqrt(vhat) + eps);
  }

  std::vector<Param<double>> params;
  params.push_back(Param<double>{"w", make_leaf(TensorD::scalar(1.0), true)});
  Adam<double> adam(lr, b1, b2, eps);
  for (int t = 1; t <= 10; ++t) {
    auto& w = params[0].var;
    w->zero_grad();
    Graph<double> g;
    auto loss = mul(&g, w, w);
    g.backward(loss);
    adam.step(params);
  }
  CHECK(params[0].var->value.data[0] == doctest::Approx(w_ref).epsilon(1e-12));
}

TEST_CASE("adam aborts on non-finite gradients") {
  std::vector<Param<double>> params;
  params.push_back(Param<double>{"w", make_leaf(TensorD::scalar(1.0), true)});
  params[0].var->zero_grad();
  params[0].var->grad.data[0] = std::numeric_limits<double>::quiet_NaN();
  Adam<double> adam(0.1);
  CHECK_THROWS_AS(adam.step(params), numeric_error);
}

TEST_CASE("synthetic pairs: determinism, structure, zero-displacement case") {
  SUBCASE("max_disp 0 gives identical images and a zero field") {
    const SynthPair p = make_synth_pair(Rng(5), {32, 32}, 0.0);
    CHECK(std::memcmp(p.fixed.data.data(), p.moving.data.data(),
                      p.fixed.data.size() * sizeof(float)) == 0);
    for (float v : p.gt_field.data) CHECK(v == 0.0f);
  }

  SUBCASE("same seed, bit-identical dataset") {
    SynthConfig cfg;
    cfg.seed = 77;
    cfg.count = 2;
    cfg.extents = {32, 32};
    cfg.max_disp = 3.0;
    const auto a = synth_dataset(cfg);
    const auto b = synth_dataset(cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      CHECK(std::memcmp(a[i].fixed.data.data(), b[i].fixed.data.data(),
                        a[i].fixed.data.size() * sizeof(float)) == 0);
      CHECK(std::memcmp(a[i].gt_field.data.data(), b[i].gt_field.data.data(),
                        a[i].gt_field.data.size() * sizeof(float)) == 0);
    }
  }

  SUBCASE("labels carry at least 4 structures; warp moves them") {
    const SynthPair p = make_synth_pair(Rng(3), {48, 48}, 2.5);
    const auto vocab = label_vocabulary(p.fixed_labels);
    CHECK(vocab.size() >= 4);
    const auto d = dice(p.moving_labels, p.fixed_labels, vocab);
    CHECK(d.mean < 1.0);
    float lo = 1e9f, hi = -1e9f;
    for (float v : p.fixed.data) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK(lo >= 0.0f);
    CHECK(hi <= 1.0f);
  }

  SUBCASE("config validation") {
    SynthConfig bad;
    bad.extents = {32, 32};
    bad.max_disp = 10.0;  // > min/8
    CHECK_THROWS_AS(bad.validate(), config_error);
  }
}

TEST_CASE("train: zero iterations leaves the initialization untouched") {
  const std::string out = temp_dir("train0");
  SynthConfig sc;
  sc.seed = 5;
  sc.count = 1;
  sc.extents = {32, 32};
  sc.max_disp = 2.0;
  write_synth_dataset(sc, out + "/data");

  TrainConfig cfg = small_train_cfg(0, 9);
  cfg.data_dir = out + "/data";
  cfg.out_dir = out + "/run";
  const auto res = train(cfg);

  Rng rng(cfg.seed);
  Network<float> init(cfg.net, rng);
  const Network<float> loaded = load_checkpoint(res.checkpoint_dir);
  CHECK(same_params(init, loaded));
}

TEST_CASE("train: smoke run decreases the loss on a synthetic pair") {
  const auto pairs_vec = synth_dataset([] {
    SynthConfig sc;
    sc.seed = 11;
    sc.count = 1;
    sc.extents = {48, 48};
    sc.max_disp = 3.0;
    return sc;
  }());
  std::vector<RegistrationPair> pairs;
  pairs.push_back(RegistrationPair{pairs_vec[0].id, pairs_vec[0].fixed,
                                   pairs_vec[0].moving,
                                   pairs_vec[0].fixed_labels,
                                   pairs_vec[0].moving_labels,
                                   pairs_vec[0].gt_field});

  TrainConfig cfg = small_train_cfg(200, 13);
  cfg.lr = 1e-3;  // smoke-test speed
  Rng rng(cfg.seed);
  Network<float> net(cfg.net, rng);
  const auto res = train_network(cfg, pairs, net);
  REQUIRE(res.history.size() == 200);
  CHECK(res.history.back().parts.total < res.history.front().parts.total);
}

TEST_CASE("train: identical seeds give bit-identical logs and checkpoints") {
  const std::string out_a = temp_dir("det_a");
  const std::string out_b = temp_dir("det_b");
  SynthConfig sc;
  sc.seed = 21;
  sc.count = 2;
  sc.extents = {32, 32};
  sc.max_disp = 2.0;
  write_synth_dataset(sc, out_a + "/data");
  write_synth_dataset(sc, out_b + "/data");

  set_sequential(true);
  TrainConfig cfg = small_train_cfg(25, 31);
  cfg.data_dir = out_a + "/data";
  cfg.out_dir = out_a + "/run";
  const auto ra = train(cfg);
  cfg.data_dir = out_b + "/data";
  cfg.out_dir = out_b + "/run";
  const auto rb = train(cfg);
  set_sequential(false);

  auto slurp = [](const std::string& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in),
                       std::istreambuf_iterator<char>());
  };
  CHECK(slurp(ra.loss_log_path) == slurp(rb.loss_log_path));

  const Network<float> na = load_checkpoint(ra.checkpoint_dir);
  const Network<float> nb = load_checkpoint(rb.checkpoint_dir);
  CHECK(same_params(na, nb));
}

TEST_CASE("checkpoint round trip reproduces forward outputs bitwise") {
  Rng rng(17);
  NetConfig cfg = NetConfig::lku(2, 2, 5);
  cfg.diffeomorphic = true;
  Network<float> net(cfg, rng);
  const std::string dir = temp_dir("ckpt") + "/c0";
  save_checkpoint(dir, net);
  const Network<float> loaded = load_checkpoint(dir);
  CHECK(same_params(net, loaded));

  Rng rin(23);
  auto input = make_constant(random_tensor<float>(rin, {1, 2, 32, 32}));
  const auto y0 = net.displacement(nullptr, input);
  const auto y1 = loaded.displacement(nullptr, input);
  CHECK(std::memcmp(y0->value.data.data(), y1->value.data.data(),
                    y0->value.data.size() * sizeof(float)) == 0);
}

TEST_CASE("checkpoint loading rejects corrupted directories") {
  const std::string dir = temp_dir("ckpt_bad");
  CHECK_THROWS_AS(load_checkpoint(dir), data_error);
}

TEST_CASE("register: zero-initialized head gives a zero field") {
  Rng rng(29);
  Network<float> net(NetConfig::lku(2, 1, 3), rng);
  auto head = net.parameter("dc9.weight");
  std::fill(head->value.data.begin(), head->value.data.end(), 0.0f);

  const SynthPair p = make_synth_pair(Rng(31), {32, 32}, 2.0);
  const auto r = register_pair(net, p.fixed, p.moving);
  for (float v : r.field.data) CHECK(v == 0.0f);
  CHECK(std::memcmp(r.warped.data.data(), p.moving.data.data(),
                    p.moving.data.size() * sizeof(float)) == 0);
  CHECK(r.fold_pct == 0.0);
}

TEST_CASE("register: self-registration shrinks the field after training") {
  const SynthPair p = make_synth_pair(Rng(37), {32, 32}, 0.0);
  std::vector<RegistrationPair> pairs;
  pairs.push_back(RegistrationPair{"pair_0000", p.fixed, p.fixed, std::nullopt,
                                   std::nullopt, std::nullopt});

  TrainConfig cfg;
  cfg.net = NetConfig::lku(2, 2, 3);
  cfg.iterations = 120;
  cfg.lr = 1e-3;
  cfg.seed = 41;
  Rng rng(cfg.seed);
  Network<float> net(cfg.net, rng);

  const auto before = register_pair(net, p.fixed, p.fixed);
  const auto s_before = displacement_statistics({before.field});
  train_network(cfg, pairs, net);
  const auto after = register_pair(net, p.fixed, p.fixed);
  const auto s_after = displacement_statistics({after.field});

  const double mag_before = s_before.mean_abs[0] + s_before.mean_abs[1];
  const double mag_after = s_after.mean_abs[0] + s_after.mean_abs[1];
  CHECK(mag_after < mag_before);
}

TEST_CASE("register rejects mismatched extents") {
  Rng rng(43);
  Network<float> net(NetConfig::lku(2, 1, 3), rng);
  TensorF a({1, 1, 32, 32});
  TensorF b({1, 1, 32, 48});
  CHECK_THROWS_AS(register_pair(net, a, b), config_error);
}

TEST_CASE("train config parsing with net and loss sub-keys") {
  std::map<std::string, std::string> kv{
      {"net.variant", "vanilla_unet"}, {"net.dims", "2"}, {"net.C", "8"},
      {"lr", "0.0001"},                {"iterations", "50"},
      {"seed", "9"},                   {"loss.lambda", "0.5"},
      {"loss.regularize_target", "velocity"},
  };
  const auto cfg = TrainConfig::from_kv(kv);
  CHECK(cfg.net.variant == Variant::vanilla_unet);
  CHECK(cfg.net.channels == 8);
  CHECK(cfg.net.k == 3);
  CHECK(cfg.lr == doctest::Approx(1e-4));
  CHECK(cfg.iterations == 50);
  CHECK(cfg.loss.lambda == doctest::Approx(0.5));
  CHECK(cfg.loss.regularize_target ==
        LossConfig::RegularizeTarget::velocity);

  kv["batch_size"] = "2";
  CHECK_THROWS_AS(TrainConfig::from_kv(kv), config_error);
}

TEST_CASE("training with dice loss uses the labels") {
  const auto ps = synth_dataset([] {
    SynthConfig sc;
    sc.seed = 51;
    sc.count = 1;
    sc.extents = {32, 32};
    sc.max_disp = 2.0;
    return sc;
  }());
  std::vector<RegistrationPair> pairs;
  pairs.push_back(RegistrationPair{ps[0].id, ps[0].fixed, ps[0].moving,
                                   ps[0].fixed_labels, ps[0].moving_labels,
                                   ps[0].gt_field});
  TrainConfig cfg = small_train_cfg(5, 61);
  cfg.loss.dice_weight = 1.0;
  Rng rng(cfg.seed);
  Network<float> net(cfg.net, rng);
  const auto res = train_network(cfg, pairs, net);
  CHECK(res.history.back().parts.has_dice);

  // without labels the same config is a usage error
  pairs[0].fixed_labels.reset();
  pairs[0].moving_labels.reset();
  Rng rng2(cfg.seed);
  Network<float> net2(cfg.net, rng2);
  CHECK_THROWS_AS(train_network(cfg, pairs, net2), usage_error);
}
