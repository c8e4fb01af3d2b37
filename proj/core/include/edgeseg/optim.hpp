#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "edgeseg/graph.hpp"

namespace edgeseg {

struct AdamWConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 1e-4f;
};

/// Adam with decoupled weight decay:
///   m <- b1*m + (1-b1)*g,  v <- b2*v + (1-b2)*g^2
///   theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta
/// Moment estimates are kept per parameter name. A non-finite gradient
/// rejects the whole step before touching anything, throwing
/// std::runtime_error that names the parameter.
class AdamW {
 public:
  explicit AdamW(const AdamWConfig& cfg);

  void step(Params& params, const std::map<std::string, Tensor>& grads);

  std::int64_t step_count() const { return t_; }
  const AdamWConfig& config() const { return cfg_; }

 private:
  struct Moments {
    std::vector<float> m;
    std::vector<float> v;
  };

  AdamWConfig cfg_;
  std::int64_t t_ = 0;
  std::map<std::string, Moments> state_;
};

}  // namespace edgeseg
