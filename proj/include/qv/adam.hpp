#pragma once

#include <cmath>

#include "qv/tensor.hpp"

namespace qv::train {

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moment buffers live in the parameter precision
/// so optimizer state round-trips exactly through float32 checkpoints.
template <typename S>
class Adam {
 public:
  Adam(std::vector<ad::Tensor<S>*> params, AdamConfig config)
      : params_(std::move(params)), config_(config), lr_(config.lr) {
    for (const auto* p : params_) {
      if (!p->requires_grad()) throw MissingGradient("adam: parameter does not track gradients");
      first_.emplace_back(p->size(), S(0));
      second_.emplace_back(p->size(), S(0));
    }
  }

  void step() {
    ++step_count_;
    const double c1 = 1.0 - std::pow(config_.beta1, double(step_count_));
    const double c2 = 1.0 - std::pow(config_.beta2, double(step_count_));
    const S b1 = S(config_.beta1), b2 = S(config_.beta2);
    const S one_minus_b1 = S(1) - b1, one_minus_b2 = S(1) - b2;
    const S lr = S(lr_), eps = S(config_.eps);
    const S inv_c1 = S(1.0 / c1), inv_c2 = S(1.0 / c2);
    for (std::size_t i = 0; i < params_.size(); ++i) {
      const auto& g = params_[i]->grad();
      auto& m = first_[i];
      auto& v = second_[i];
      auto& value = params_[i]->mutable_data();
      for (std::size_t j = 0; j < value.size(); ++j) {
        m[j] = b1 * m[j] + one_minus_b1 * g[j];
        v[j] = b2 * v[j] + one_minus_b2 * g[j] * g[j];
        const S m_hat = m[j] * inv_c1;
        const S v_hat = v[j] * inv_c2;
        value[j] -= lr * m_hat / (std::sqrt(v_hat) + eps);
      }
    }
  }

  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  const AdamConfig& config() const { return config_; }

  std::int64_t step_count() const { return step_count_; }
  void set_step_count(std::int64_t n) { step_count_ = n; }

  std::vector<std::vector<S>>& first_moments() { return first_; }
  std::vector<std::vector<S>>& second_moments() { return second_; }

 private:
  std::vector<ad::Tensor<S>*> params_;
  AdamConfig config_;
  double lr_;
  std::int64_t step_count_ = 0;
  std::vector<std::vector<S>> first_;
  std::vector<std::vector<S>> second_;
};

}  // namespace qv::train
