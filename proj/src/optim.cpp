#include "shapecomp/optim.hpp"

#include <cmath>

namespace shapecomp {

void Sgd::step(const std::vector<Parameter*>& params) {
  ++steps_;
  for (Parameter* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      p->value[i] -= lr_ * p->grad[i];
    }
    p->zero_grad();
  }
}

void Adam::step(const std::vector<Parameter*>& params) {
  ++steps_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  for (Parameter* p : params) {
    auto [it, fresh] = state_.try_emplace(p);
    Moments& mom = it->second;
    if (fresh) {
      mom.m = Tensor(p->value.rows(), p->value.cols());
      mom.v = Tensor(p->value.rows(), p->value.cols());
    }
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const double g = p->grad[i];
      mom.m[i] = beta1_ * mom.m[i] + (1.0 - beta1_) * g;
      mom.v[i] = beta2_ * mom.v[i] + (1.0 - beta2_) * g * g;
      const double m_hat = mom.m[i] / bc1;
      const double v_hat = mom.v[i] / bc2;
      p->value[i] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
    p->zero_grad();
  }
}

}  // namespace shapecomp
