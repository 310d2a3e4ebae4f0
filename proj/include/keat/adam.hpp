#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "keat/tape.hpp"

namespace keat {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::uint64_t step = 0;
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
};

/// One bias-corrected Adam update of every parameter in `params`.
/// Parameters missing from `grads` see a zero gradient.
void adam_step(ParamStore& params, const GradStore& grads, AdamState& state, const AdamConfig& cfg);

}  // namespace keat
