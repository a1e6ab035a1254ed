#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "scl/tensor.hpp"

namespace scl {

// A trainable tensor plus its Adam moment estimates.
struct Parameter {
  std::string name;
  Tensor value;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::uint64_t step_count = 0;

  Parameter() = default;
  Parameter(std::string name, Tensor value);
};

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// One bias-corrected Adam update. Every parameter must hold a gradient
// (throws StateError otherwise); gradients are cleared afterwards.
void adam_step(std::span<Parameter* const> params, const AdamOptions& opt = {});

void zero_grad(std::span<Parameter* const> params);

}  // namespace scl
