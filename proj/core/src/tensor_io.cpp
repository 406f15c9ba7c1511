#include "lkreg/tensor_io.hpp"

#include <fstream>
#include <sstream>
#include <type_traits>

namespace lkreg {

namespace {

struct TnsHeader {
  TnsType dtype;
  std::vector<index_t> shape;
};

TnsHeader read_header(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line))
    throw data_error("tns: cannot read header of " + path);
  std::istringstream hs(line);
  std::string magic, version, dtype;
  int ndim = -1;
  hs >> magic >> version >> dtype >> ndim;
  if (magic != "tns" || version != "v1")
    throw data_error("tns: bad magic in " + path);
  TnsHeader h;
  if (dtype == "f32")
    h.dtype = TnsType::f32;
  else if (dtype == "f64")
    h.dtype = TnsType::f64;
  else
    throw data_error("tns: unknown dtype '" + dtype + "' in " + path);
  if (ndim < 1 || ndim > 8)
    throw data_error("tns: bad ndim in " + path);
  h.shape.resize(static_cast<std::size_t>(ndim));
  for (auto& d : h.shape) {
    if (!(hs >> d) || d <= 0)
      throw data_error("tns: bad extent in " + path);
  }
  return h;
}

template <class Disk, class T>
void read_values(std::istream& in, Tensor<T>& out, const std::string& path) {
  if constexpr (std::is_same_v<Disk, T>) {
    in.read(reinterpret_cast<char*>(out.data.data()),
            static_cast<std::streamsize>(out.data.size() * sizeof(T)));
    if (!in) throw data_error("tns: truncated data in " + path);
  } else {
    std::vector<Disk> buf(out.data.size());
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(Disk)));
    if (!in) throw data_error("tns: truncated data in " + path);
    for (std::size_t i = 0; i < buf.size(); ++i)
      out.data[i] = static_cast<T>(buf[i]);
  }
}

}  // namespace

TnsType peek_tns_dtype(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("tns: cannot open " + path);
  return read_header(in, path).dtype;
}

template <class T>
void write_tns(const std::string& path, const Tensor<T>& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("tns: cannot open " + path + " for writing");
  std::ostringstream hs;
  hs << "tns v1 " << (std::is_same_v<T, float> ? "f32" : "f64") << " "
     << t.rank();
  for (index_t d : t.shape) hs << " " << d;
  hs << "\n";
  const std::string header = hs.str();
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(T)));
  if (!out) throw data_error("tns: short write to " + path);
}

template <class T>
Tensor<T> read_tns(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("tns: cannot open " + path);
  const TnsHeader h = read_header(in, path);
  Tensor<T> t(h.shape);
  if (h.dtype == TnsType::f32)
    read_values<float>(in, t, path);
  else
    read_values<double>(in, t, path);
  return t;
}

template void write_tns<float>(const std::string&, const Tensor<float>&);
template void write_tns<double>(const std::string&, const Tensor<double>&);
template Tensor<float> read_tns<float>(const std::string&);
template Tensor<double> read_tns<double>(const std::string&);

}  // namespace lkreg
