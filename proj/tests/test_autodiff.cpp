#include <doctest.h>

#include <cstring>

#include "lkreg/ops.hpp"
#include "lkreg/parallel.hpp"
#include "support/reference.hpp"

using namespace lkreg;
using namespace lkreg::testing;

TEST_CASE("elementwise forward semantics") {
  auto a = make_leaf(TensorD({1, 1, 3}, {1.0, -2.0, 3.0}), false);
  auto z = make_leaf(TensorD::zeros({1, 1, 3}), false);

  CHECK(add<double>(nullptr, a, z)->value.data == a->value.data);

  auto lr = leaky_relu<double>(nullptr,
                               make_leaf(TensorD({3}, {-1.0, 0.0, 2.0}), false),
                               0.2);
  CHECK(lr->value.data[0] == doctest::Approx(-0.2));
  CHECK(lr->value.data[1] == 0.0);
  CHECK(lr->value.data[2] == 2.0);

  auto pr = prelu<double>(nullptr,
                          make_leaf(TensorD({3}, {-2.0, 0.0, 1.5}), false),
                          make_leaf(TensorD::scalar(0.25), false));
  CHECK(pr->value.data[0] == doctest::Approx(-0.5));
  CHECK(pr->value.data[2] == 1.5);

  CHECK_THROWS_AS(
      add<double>(nullptr, a, make_leaf(TensorD::zeros({1, 1, 4}), false)),
      usage_error);
  CHECK_THROWS_AS(
      concat<double>(nullptr, 1, a, make_leaf(TensorD::zeros({1, 2, 4}), false)),
      usage_error);
}

TEST_CASE("loss = sum(w*x) gives grad_w = x exactly") {
  Rng rng(11);
  auto w = make_leaf(random_tensor<double>(rng, {2, 3}), true, "w");
  auto x = make_leaf(random_tensor<double>(rng, {2, 3}), false, "x");
  Graph<double> g;
  auto loss = sum(&g, mul(&g, w, x));
  g.backward(loss);
  CHECK(max_abs_diff(w->grad, x->value) == 0.0);
}

TEST_CASE("backward contract: scalar loss only, single shot") {
  Rng rng(3);
  auto w = make_leaf(random_tensor<double>(rng, {4}), true);
  Graph<double> g;
  auto y = mul(&g, w, w);
  CHECK_THROWS_AS(g.backward(y), usage_error);  // non-scalar
  auto loss = sum(&g, y);
  g.backward(loss);
  CHECK_THROWS_AS(g.backward(loss), usage_error);  // consumed
}

TEST_CASE("gradcheck: elementwise, concat, reductions, box_sum") {
  Rng rng(23);
  for (int seed = 0; seed < 5; ++seed) {
    Rng r = rng.fork(static_cast<std::uint64_t>(seed));
    auto a = make_leaf(random_tensor<double>(r, {1, 2, 4, 3}), true);
    auto b = make_leaf(random_tensor<double>(r, {1, 2, 4, 3}, 0.5, 2.0), true);

    auto fn = [&](Graph<double>* g) {
      auto s = add(g, mul(g, a, b), scale(g, sub(g, a, b), 0.7));
      auto d = div(g, s, add_scalar(g, mul(g, b, b), 0.3));
      auto c = concat(g, 1, d, mul(g, a, a));
      auto bs = box_sum(g, c, {1, 1, 0});
      return mean(g, mul(g, bs, bs));
    };
    CHECK(gradcheck_max_rel_err(fn, {a, b}) < 1e-6);
  }
}

TEST_CASE("gradcheck: leaky_relu and prelu away from the kink") {
  Rng rng(37);
  auto x = make_leaf(random_tensor<double>(rng, {2, 5}), true);
  for (auto& v : x->value.data)
    if (std::abs(v) < 1e-2) v += 0.05;  // keep clear of 0
  auto alpha = make_leaf(TensorD::scalar(0.25), true);

  auto fn = [&](Graph<double>* g) {
    auto y = leaky_relu(g, x, 0.2);
    auto z = prelu(g, y, alpha);
    return sum(g, mul(g, z, z));
  };
  CHECK(gradcheck_max_rel_err(fn, {x, alpha}) < 1e-6);
}

TEST_CASE("concat backward splits the gradient exactly") {
  Rng rng(5);
  auto a = make_leaf(random_tensor<double>(rng, {1, 2, 3}), true);
  auto b = make_leaf(random_tensor<double>(rng, {1, 1, 3}), true);
  auto fn = [&](Graph<double>* g) {
    auto c = concat(g, 1, a, b);
    return sum(g, mul(g, c, c));
  };
  CHECK(gradcheck_max_rel_err(fn, {a, b}) < 1e-6);

  // and the split is exact: grad of sum(concat) is ones in both halves
  a->zero_grad();
  b->zero_grad();
  Graph<double> g;
  g.backward(sum(&g, concat(&g, 1, a, b)));
  for (double v : a->grad.data) CHECK(v == 1.0);
  for (double v : b->grad.data) CHECK(v == 1.0);
}

TEST_CASE("box_sum matches the naive window-sum oracle") {
  Rng rng(101);
  for (int trial = 0; trial < 8; ++trial) {
    Rng r = rng.fork(static_cast<std::uint64_t>(trial));
    const index_t h = r.uniform_int(3, 8), w = r.uniform_int(3, 8);
    auto x = random_tensor<double>(r, {1, 2, h, w});
    const std::array<index_t, 3> radii{r.uniform_int(0, 2),
                                       r.uniform_int(0, 2), 0};
    const auto fast = box_sum_tensor(x, radii);
    const auto ref = naive_box_sum(x, radii);
    CHECK(max_abs_diff(fast, ref) < 1e-10);
  }
  // 3D
  Rng r3 = rng.fork(99);
  auto x3 = random_tensor<double>(r3, {1, 1, 4, 5, 6});
  CHECK(max_abs_diff(box_sum_tensor(x3, {1, 2, 1}),
                     naive_box_sum(x3, {1, 2, 1})) < 1e-10);
}

TEST_CASE("identical runs are bit identical, any partitioning") {
  Rng rng(41);
  auto x = random_tensor<float>(rng, {1, 3, 16, 16});

  set_max_threads(1);
  const auto seq = box_sum_tensor(x, {2, 2, 0});
  set_max_threads(4);
  const auto par = box_sum_tensor(x, {2, 2, 0});
  set_max_threads(0);

  REQUIRE(seq.data.size() == par.data.size());
  CHECK(std::memcmp(seq.data.data(), par.data.data(),
                    seq.data.size() * sizeof(float)) == 0);

  set_sequential(true);
  const auto seq2 = box_sum_tensor(x, {2, 2, 0});
  set_sequential(false);
  CHECK(std::memcmp(seq.data.data(), seq2.data.data(),
                    seq.data.size() * sizeof(float)) == 0);
}
