#include "brainseg/adam.hpp"

#include <cmath>

#include "brainseg/error.hpp"

namespace brainseg {

Adam::Adam(AdamConfig cfg, std::vector<nn::Parameter*> params)
    : cfg_(cfg), params_(std::move(params)) {
  if (!(cfg_.learning_rate > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "learning_rate must be > 0");
  }
  for (const auto* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto w = params_[k]->value.values();
    auto g = params_[k]->grad.values();
    auto m = m_[k].values();
    auto v = v_[k].values();
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double gi = g[i];
      const double mi = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * gi;
      const double vi = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double update = cfg_.learning_rate * (mi / c1) / (std::sqrt(vi / c2) + cfg_.epsilon);
      w[i] = static_cast<float>(w[i] - update);
    }
  }
}

void Adam::restore(std::uint64_t steps, std::vector<Tensor> m, std::vector<Tensor> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw Error(ErrorCode::CorruptCheckpoint, "optimizer state has the wrong tensor count");
  }
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (m[k].shape() != params_[k]->value.shape() || v[k].shape() != params_[k]->value.shape()) {
      throw Error(ErrorCode::CorruptCheckpoint,
                  "optimizer state shape mismatch for " + params_[k]->name);
    }
  }
  steps_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

}  // namespace brainseg
