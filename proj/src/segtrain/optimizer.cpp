#include "cdpcl/segtrain/optimizer.hpp"

#include <cmath>

#include "cdpcl/errors.hpp"

namespace cdpcl::segtrain {

double poly_lr(std::size_t iter, std::size_t max_iter, double base_lr, double power) {
  if (max_iter == 0 || iter > max_iter) {
    throw ContractError("poly_lr: iteration " + std::to_string(iter) + " outside [0, " + std::to_string(max_iter) + "]");
  }
  return base_lr * std::pow(1.0 - static_cast<double>(iter) / static_cast<double>(max_iter), power);
}

SgdMomentum::SgdMomentum(std::vector<NamedTensor>& params, double momentum) : params_(params), momentum_(momentum) {
  for (const auto& p : params_) velocity_.emplace_back(p.tensor.numel(), 0.0);
}

void SgdMomentum::step(double lr) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& t = params_[i].tensor;
    auto& v = velocity_[i];
    auto w = t.mutable_values();
    if (t.has_grad()) {
      const auto g = t.grad();
      for (std::size_t j = 0; j < v.size(); ++j) v[j] = momentum_ * v[j] + g[j];
    } else {
      for (auto& x : v) x *= momentum_;
    }
    for (std::size_t j = 0; j < v.size(); ++j) w[j] -= lr * v[j];
  }
}

std::vector<NamedTensor> SgdMomentum::state() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    out.push_back({"momentum." + params_[i].name, Tensor(params_[i].tensor.shape(), velocity_[i])});
  }
  return out;
}

void SgdMomentum::load(const std::vector<NamedTensor>& checkpoint) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& t = find_tensor(checkpoint, "momentum." + params_[i].name);
    if (t.numel() != velocity_[i].size()) throw ConfigError("momentum buffer size mismatch for " + params_[i].name);
    velocity_[i].assign(t.values().begin(), t.values().end());
  }
}

}  // namespace cdpcl::segtrain
