#include "lkreg/tensor.hpp"

#include <cmath>
#include <cstdlib>
#include <sstream>

namespace lkreg {

template <class T>
bool Tensor<T>::all_finite() const {
  for (const T& v : data)
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

template <class T>
std::string shape_string(const std::vector<T>& s) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << ", ";
    os << s[i];
  }
  os << "]";
  return os.str();
}

template <class T>
void check_finite(const Tensor<T>& t, const std::string& what) {
  if (!t.all_finite())
    throw numeric_error(what + ": non-finite values in tensor of shape " +
                        shape_string(t.shape));
}

bool finite_checks_enabled() {
  static const bool enabled = [] {
    if (const char* env = std::getenv("LKREG_CHECK_FINITE"))
      return std::atoi(env) != 0;
#ifdef NDEBUG
    return false;
#else
    return true;
#endif
  }();
  return enabled;
}

template bool Tensor<float>::all_finite() const;
template bool Tensor<double>::all_finite() const;
template std::string shape_string<index_t>(const std::vector<index_t>&);
template void check_finite<float>(const Tensor<float>&, const std::string&);
template void check_finite<double>(const Tensor<double>&, const std::string&);

}  // namespace lkreg
