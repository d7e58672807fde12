#pragma once

#include <vector>

#include "cdpcl/numerics/checkpoint.hpp"

namespace cdpcl::segtrain {

/// base_lr * (1 - iter / max_iter)^power.
double poly_lr(std::size_t iter, std::size_t max_iter, double base_lr, double power = 0.9);

/// Heavy-ball SGD: v <- mu * v + g; p <- p - lr * v. No weight decay.
class SgdMomentum {
 public:
  SgdMomentum(std::vector<NamedTensor>& params, double momentum = 0.9);

  /// Parameters without an accumulated gradient are treated as g = 0.
  void step(double lr);

  /// Buffers named "momentum.<param>".
  std::vector<NamedTensor> state() const;
  void load(const std::vector<NamedTensor>& checkpoint);

 private:
  std::vector<NamedTensor>& params_;
  double momentum_;
  std::vector<std::vector<double>> velocity_;
};

}  // namespace cdpcl::segtrain
