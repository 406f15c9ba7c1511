#include <doctest.h>

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "lkreg/tensor.hpp"
#include "lkreg/tensor_io.hpp"
#include "support/reference.hpp"

using namespace lkreg;
namespace fs = std::filesystem;

namespace {

std::string temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "lkreg_tests";
  fs::create_directories(dir);
  return (dir / name).string();
}

}  // namespace

TEST_CASE("tensor shape and data length stay consistent") {
  TensorF t({2, 3, 4});
  CHECK(t.numel() == 24);
  CHECK(t.rank() == 3);
  CHECK(t.spatial_rank() == 1);
  CHECK_THROWS_AS(TensorF({2, 0, 4}), usage_error);
  CHECK_THROWS_AS(TensorF({2, 2}, std::vector<float>{1.0f, 2.0f, 3.0f}),
                  usage_error);

  t.at({1, 2, 3}) = 7.0f;
  CHECK(t.data[23] == 7.0f);
  CHECK_THROWS_AS(t.at({2, 0, 0}), usage_error);
  CHECK_THROWS_AS(t.at({0, 0}), usage_error);
}

TEST_CASE("tns v1 round trip is bit exact for both dtypes") {
  Rng rng(7);
  const auto f32 = testing::random_tensor<float>(rng, {1, 2, 5, 3});
  const auto f64 = testing::random_tensor<double>(rng, {2, 1, 4});

  const std::string p32 = temp_path("t32.tns");
  const std::string p64 = temp_path("t64.tns");
  write_tns(p32, f32);
  write_tns(p64, f64);

  CHECK(peek_tns_dtype(p32) == TnsType::f32);
  CHECK(peek_tns_dtype(p64) == TnsType::f64);

  const auto r32 = read_tns<float>(p32);
  const auto r64 = read_tns<double>(p64);
  CHECK(r32.shape == f32.shape);
  CHECK(r64.shape == f64.shape);
  CHECK(std::memcmp(r32.data.data(), f32.data.data(),
                    f32.data.size() * sizeof(float)) == 0);
  CHECK(std::memcmp(r64.data.data(), f64.data.data(),
                    f64.data.size() * sizeof(double)) == 0);

  // cross-dtype read converts values
  const auto conv = read_tns<double>(p32);
  for (std::size_t i = 0; i < conv.data.size(); ++i)
    CHECK(conv.data[i] == doctest::Approx(f32.data[i]));
}

TEST_CASE("tns v1 rejects malformed files") {
  const std::string path = temp_path("bad.tns");
  {
    std::ofstream out(path, std::ios::trunc);
    out << "nottns v1 f32 1 4\n";
  }
  CHECK_THROWS_AS(read_tns<float>(path), data_error);
  {
    std::ofstream out(path, std::ios::trunc);
    out << "tns v1 f16 1 4\n";
  }
  CHECK_THROWS_AS(read_tns<float>(path), data_error);
  {
    std::ofstream out(path, std::ios::trunc);
    out << "tns v1 f32 2 4 4\nshort";
  }
  CHECK_THROWS_AS(read_tns<float>(path), data_error);
  CHECK_THROWS_AS(read_tns<float>(temp_path("missing.tns")), data_error);
}

TEST_CASE("finite check flags NaN and Inf") {
  TensorF t({2, 2});
  CHECK(t.all_finite());
  t.data[1] = std::numeric_limits<float>::infinity();
  CHECK_FALSE(t.all_finite());
  CHECK_THROWS_AS(check_finite(t, "test"), numeric_error);
}
