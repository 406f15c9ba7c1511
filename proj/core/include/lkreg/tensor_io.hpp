#pragma once

#include <string>

#include "lkreg/tensor.hpp"

namespace lkreg {

// "tns v1" raw tensor file: one ASCII header line
//   tns v1 <f32|f64> <ndim> <d1> ... <dn>\n
// followed immediately by little-endian raw values, row-major with the
// last dimension fastest. Round trips are bit-exact for matching dtypes.

enum class TnsType { f32, f64 };

TnsType peek_tns_dtype(const std::string& path);

template <class T>
void write_tns(const std::string& path, const Tensor<T>& t);

// Reads any tns file; converts values when the on-disk dtype differs.
template <class T>
Tensor<T> read_tns(const std::string& path);

}  // namespace lkreg
