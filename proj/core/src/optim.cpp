#include "edgeseg/optim.hpp"

#include <cmath>
#include <stdexcept>

#include "edgeseg/ops.hpp"

namespace edgeseg {

AdamW::AdamW(const AdamWConfig& cfg) : cfg_(cfg) {
  if (cfg.lr <= 0) throw std::invalid_argument("adamw: lr must be positive");
  if (cfg.beta1 < 0 || cfg.beta1 >= 1 || cfg.beta2 < 0 || cfg.beta2 >= 1) {
    throw std::invalid_argument("adamw: betas must lie in [0, 1)");
  }
  if (cfg.eps <= 0) throw std::invalid_argument("adamw: eps must be positive");
  if (cfg.weight_decay < 0) throw std::invalid_argument("adamw: weight_decay must be >= 0");
}

void AdamW::step(Params& params, const std::map<std::string, Tensor>& grads) {
  // validate everything first so a bad gradient leaves params, moments and
  // the step count untouched
  for (const auto& [name, g] : grads) {
    const auto it = params.find(name);
    if (it == params.end()) {
      throw std::invalid_argument("adamw: gradient for unknown parameter '" + name + "'");
    }
    if (g.numel() != it->second.t.numel()) {
      throw std::invalid_argument("adamw: gradient for '" + name + "' has " +
                                  std::to_string(g.numel()) + " values, parameter has " +
                                  std::to_string(it->second.t.numel()));
    }
    if (!all_finite(g)) {
      throw std::runtime_error("adamw: non-finite gradient for parameter '" + name +
                               "', step rejected");
    }
  }

  ++t_;
  const float bc1 = 1.0f - std::pow(cfg_.beta1, static_cast<float>(t_));
  const float bc2 = 1.0f - std::pow(cfg_.beta2, static_cast<float>(t_));
  for (const auto& [name, g] : grads) {
    auto& theta = params.at(name).t.data;
    Moments& mom = state_[name];
    if (mom.m.empty()) {
      mom.m.assign(theta.size(), 0.0f);
      mom.v.assign(theta.size(), 0.0f);
    }
    for (std::size_t i = 0; i < theta.size(); ++i) {
      const float gi = g.data[i];
      mom.m[i] = cfg_.beta1 * mom.m[i] + (1.0f - cfg_.beta1) * gi;
      mom.v[i] = cfg_.beta2 * mom.v[i] + (1.0f - cfg_.beta2) * gi * gi;
      const float mhat = mom.m[i] / bc1;
      const float vhat = mom.v[i] / bc2;
      theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps) +
                  cfg_.lr * cfg_.weight_decay * theta[i];
    }
  }
}

}  // namespace edgeseg
