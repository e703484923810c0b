#pragma once

#include <cmath>
#include <string>
#include <unordered_map>
#include <vector>

#include "mca/layers.hpp"

namespace mca {

// RMSprop:
//   acc   <- decay * acc + (1 - decay) * grad^2
//   param <- param - lr * grad / (sqrt(acc) + eps)
class RMSprop {
 public:
  explicit RMSprop(real lr = real(2.5e-4), real decay = real(0.99),
                   real eps = real(1e-8))
      : lr_(lr), decay_(decay), eps_(eps) {}

  real learning_rate() const { return lr_; }
  void set_learning_rate(real lr) { lr_ = lr; }

  void step(ParamList& params) {
    for (auto& p : params) {
      if (!p.tensor.requires_grad()) continue;
      if (!p.tensor.has_grad()) continue;
      auto& acc = accumulator(p.name, p.tensor.numel());
      auto& data = p.tensor.data();
      const auto& grad = p.tensor.grad();
      MCA_CHECK(acc.size() == data.size(), "rmsprop: accumulator for ",
                p.name, " has stale size");
      for (std::size_t i = 0; i < data.size(); ++i) {
        acc[i] = decay_ * acc[i] + (real(1) - decay_) * grad[i] * grad[i];
        data[i] -= lr_ * grad[i] / (std::sqrt(acc[i]) + eps_);
      }
    }
  }

  void zero_grad(ParamList& params) {
    for (auto& p : params) p.tensor.zero_grad();
  }

  std::vector<real>& accumulator(const std::string& name, std::size_t size) {
    auto it = state_.find(name);
    if (it == state_.end())
      it = state_.emplace(name, std::vector<real>(size, real(0))).first;
    return it->second;
  }

 private:
  real lr_, decay_, eps_;
  std::unordered_map<std::string, std::vector<real>> state_;
};

inline real grad_norm(const ParamList& params) {
  real acc = 0;
  for (const auto& p : params) {
    if (!p.tensor.requires_grad() || !p.tensor.has_grad()) continue;
    for (real g : p.tensor.grad()) acc += g * g;
  }
  return std::sqrt(acc);
}

}  // namespace mca
