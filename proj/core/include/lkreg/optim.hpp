#pragma once

#include "lkreg/network.hpp"

namespace lkreg {

// Adam with bias correction and a fixed learning rate.
template <class T>
class Adam {
 public:
  explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  // One update from the accumulated parameter grads. Throws numeric_error
  // on non-finite gradients.
  void step(std::vector<Param<T>>& params);

  std::int64_t timestep() const { return t_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

extern template class Adam<float>;
extern template class Adam<double>;

}  // namespace lkreg
