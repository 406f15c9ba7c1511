#include "lkreg/optim.hpp"

#include <cmath>

namespace lkreg {

template <class T>
Adam<T>::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (lr <= 0) throw config_error("adam: learning rate must be positive");
}

template <class T>
void Adam<T>::step(std::vector<Param<T>>& params) {
  if (m_.empty()) {
    m_.resize(params.size());
    v_.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      const auto n = params[i].var->value.data.size();
      m_[i].assign(n, T(0));
      v_[i].assign(n, T(0));
    }
  }
  if (m_.size() != params.size())
    throw usage_error("adam: parameter list changed between steps");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    if (!p.var->has_grad())
      throw usage_error("adam: parameter '" + p.name + "' has no gradient");
    auto& val = p.var->value.data;
    auto& grad = p.var->grad.data;
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < val.size(); ++j) {
      const double g = static_cast<double>(grad[j]);
      if (!std::isfinite(g))
        throw numeric_error("adam: non-finite gradient in parameter '" +
                            p.name + "'");
      const double mj = beta1_ * static_cast<double>(m[j]) + (1.0 - beta1_) * g;
      const double vj =
          beta2_ * static_cast<double>(v[j]) + (1.0 - beta2_) * g * g;
      m[j] = static_cast<T>(mj);
      v[j] = static_cast<T>(vj);
      const double mhat = mj / bc1;
      const double vhat = vj / bc2;
      val[j] = static_cast<T>(static_cast<double>(val[j]) -
                              lr_ * mhat / (std::sqrt(vhat) + eps_));
    }
  }
}

template class Adam<float>;
template class Adam<double>;

}  // namespace lkreg
