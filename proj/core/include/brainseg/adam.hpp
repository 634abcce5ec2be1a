#pragma once

#include <cstdint>
#include <vector>

#include "brainseg/autodiff.hpp"

namespace brainseg {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Bias-corrected Adam over a fixed parameter list:
///   m <- b1 m + (1 - b1) g,  v <- b2 v + (1 - b2) g^2
///   w <- w - lr * (m / (1 - b1^t)) / (sqrt(v / (1 - b2^t)) + eps)
class Adam {
 public:
  Adam(AdamConfig cfg, std::vector<nn::Parameter*> params);

  /// Applies one update from the parameters' current gradients.
  void step();

  const AdamConfig& config() const noexcept { return cfg_; }
  std::uint64_t steps() const noexcept { return steps_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

  /// Restores a saved state; shapes must match the parameter list.
  void restore(std::uint64_t steps, std::vector<Tensor> m, std::vector<Tensor> v);

 private:
  AdamConfig cfg_;
  std::vector<nn::Parameter*> params_;
  std::vector<Tensor> m_, v_;
  std::uint64_t steps_ = 0;
};

}  // namespace brainseg
