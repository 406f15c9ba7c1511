#pragma once

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "lkreg/common.hpp"

namespace lkreg {

// Dense row-major tensor. Layout convention throughout the project:
// [batch, channel, spatial...] with the last spatial dimension fastest.
template <class T>
struct Tensor {
  std::vector<index_t> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<index_t> s) : shape(std::move(s)) {
    data.assign(static_cast<std::size_t>(numel_of(shape)), T(0));
  }
  Tensor(std::vector<index_t> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<index_t>(data.size()) != numel_of(shape))
      throw usage_error("tensor: data length does not match shape product");
  }

  static index_t numel_of(const std::vector<index_t>& s) {
    index_t n = 1;
    for (index_t e : s) {
      if (e <= 0) throw usage_error("tensor: non-positive extent");
      n *= e;
    }
    return n;
  }

  static Tensor zeros(std::vector<index_t> s) { return Tensor(std::move(s)); }
  static Tensor full(std::vector<index_t> s, T v) {
    Tensor t(std::move(s));
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }
  static Tensor scalar(T v) { return full({1}, v); }

  index_t numel() const { return static_cast<index_t>(data.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  index_t dim(int i) const { return shape.at(static_cast<std::size_t>(i)); }

  // Number of spatial dimensions under the [B, C, spatial...] convention.
  int spatial_rank() const { return rank() - 2; }
  index_t spatial_numel() const {
    index_t n = 1;
    for (int i = 2; i < rank(); ++i) n *= dim(i);
    return n;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  T& at(std::initializer_list<index_t> idx) {
    return data[static_cast<std::size_t>(flat_index(idx))];
  }
  const T& at(std::initializer_list<index_t> idx) const {
    return data[static_cast<std::size_t>(flat_index(idx))];
  }

  index_t flat_index(std::initializer_list<index_t> idx) const {
    if (static_cast<int>(idx.size()) != rank())
      throw usage_error("tensor: index rank mismatch");
    index_t flat = 0;
    int i = 0;
    for (index_t v : idx) {
      const index_t e = shape[static_cast<std::size_t>(i)];
      if (v < 0 || v >= e) throw usage_error("tensor: index out of bounds");
      flat = flat * e + v;
      ++i;
    }
    return flat;
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i)
      out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  bool all_finite() const;
};

template <class T>
std::string shape_string(const std::vector<T>& s);

// Throws numeric_error when non-finite values are present; used by the
// debug-mode forward checks and the training NaN guard.
template <class T>
void check_finite(const Tensor<T>& t, const std::string& what);

// Global toggle for per-op finiteness checks. Defaults to on in debug
// builds, off in release; LKREG_CHECK_FINITE=0/1 overrides.
bool finite_checks_enabled();

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace lkreg
