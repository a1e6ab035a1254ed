#include "scl/optim.hpp"

#include <cmath>

#include "scl/errors.hpp"

namespace scl {

Parameter::Parameter(std::string n, Tensor v)
    : name(std::move(n)),
      value(std::move(v)),
      adam_m(value.size(), 0.0),
      adam_v(value.size(), 0.0) {
  value.set_requires_grad(true);
}

void adam_step(std::span<Parameter* const> params, const AdamOptions& opt) {
  for (const Parameter* p : params) {
    if (!p->value.has_grad()) {
      throw StateError("adam_step: parameter '" + p->name + "' has no gradient");
    }
  }
  for (Parameter* p : params) {
    ++p->step_count;
    const double t = static_cast<double>(p->step_count);
    const double bc1 = 1.0 - std::pow(opt.beta1, t);
    const double bc2 = 1.0 - std::pow(opt.beta2, t);
    auto data = p->value.data();
    auto grad = p->value.grad();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double g = grad[i];
      p->adam_m[i] = opt.beta1 * p->adam_m[i] + (1.0 - opt.beta1) * g;
      p->adam_v[i] = opt.beta2 * p->adam_v[i] + (1.0 - opt.beta2) * g * g;
      const double m_hat = p->adam_m[i] / bc1;
      const double v_hat = p->adam_v[i] / bc2;
      data[i] -= opt.lr * m_hat / (std::sqrt(v_hat) + opt.eps);
    }
    p->value.clear_grad();
  }
}

void zero_grad(std::span<Parameter* const> params) {
  for (Parameter* p : params) p->value.clear_grad();
}

}  // namespace scl
