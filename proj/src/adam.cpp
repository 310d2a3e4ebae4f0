#include "keat/adam.hpp"

#include <cmath>

#include "keat/errors.hpp"

namespace keat {

void adam_step(ParamStore& params, const GradStore& grads, AdamState& state, const AdamConfig& cfg) {
  for (const auto& [name, g] : grads.entries()) {
    if (!params.contains(name)) throw ContractError("adam: gradient for unknown parameter '" + name + "'");
    if (g.shape() != params.value(name).shape()) {
      throw ContractError("adam: gradient '" + name + "' has shape " + shape_str(g.shape()) +
                          ", parameter has " + shape_str(params.value(name).shape()));
    }
  }

  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& [name, p] : params.entries()) {
    Tensor& theta = p.value;
    auto mit = state.m.try_emplace(name, Tensor(theta.shape())).first;
    auto vit = state.v.try_emplace(name, Tensor(theta.shape())).first;
    Tensor& m = mit->second;
    Tensor& v = vit->second;
    if (m.shape() != theta.shape() || v.shape() != theta.shape()) {
      throw ContractError("adam: moment shape mismatch for '" + name + "'");
    }
    const Tensor* g = grads.find(name);
    for (std::size_t i = 0; i < theta.numel(); ++i) {
      const double gi = g ? (*g)[i] : 0.0;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta[i] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
    }
  }
}

}  // namespace keat
