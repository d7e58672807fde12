#pragma once

#include <cstddef>
#include <vector>

#include "cdpcl/numerics/tensor.hpp"

namespace cdpcl {

/// Guard applied to log arguments, division denominators and normalization
/// norms. Clamping increments diagnostics::Warning::NumericGuard.
inline constexpr double kGuardEpsilon = 1e-12;

// Elementwise binary ops broadcast with NumPy rules.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor mul_scalar(const Tensor& a, double s);

Tensor abs(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor sum(const Tensor& a, std::size_t axis, bool keepdim = false);
Tensor mean(const Tensor& a);
Tensor mean(const Tensor& a, std::size_t axis, bool keepdim = false);

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

struct Conv2dOptions {
  std::size_t stride = 1;
  std::size_t pad = 0;
};

/// x: B x Cin x H x W, weight: Cout x Cin x K x K, bias: Cout (may be empty
/// tensor of shape [0]).
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opts = {});

Tensor softmax(const Tensor& a, std::size_t axis);
Tensor log_softmax(const Tensor& a, std::size_t axis);
/// Max-shifted log(sum(exp(a))) along axis. Entries equal to -inf are allowed
/// and act as masked out, provided each slice has at least one finite entry.
Tensor logsumexp(const Tensor& a, std::size_t axis, bool keepdim = false);
/// a / max(||a||_2, eps) along axis.
Tensor l2_normalize(const Tensor& a, std::size_t axis, double eps = kGuardEpsilon);

/// Nearest-neighbour upsampling of the two trailing axes of a rank-4 tensor.
Tensor upsample_nearest(const Tensor& a, std::size_t factor);

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor index_select(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& indices);

Tensor broadcast_to(const Tensor& a, const Shape& shape);
Tensor reshape(const Tensor& a, Shape shape);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

}  // namespace cdpcl
