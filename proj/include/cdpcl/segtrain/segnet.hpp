#pragma once

#include <cstdint>
#include <vector>

#include "cdpcl/numerics/checkpoint.hpp"
#include "cdpcl/numerics/tensor.hpp"

namespace cdpcl::segtrain {

/// Output stride of the encoder.
inline constexpr std::size_t kOutputStride = 4;

/// Fixed input standardization applied before the first convolution. Without
/// it the first-layer features of [0, 1] images share a large common component
/// and every class feature starts nearly parallel.
inline constexpr double kInputMean = 0.5;
inline constexpr double kInputStd = 0.25;

struct SegNetShape {
  std::size_t classes = 6;
  std::size_t feat_dim = 32;
  std::size_t width1 = 16;
  std::size_t width2 = 32;
};

struct ForwardResult {
  Tensor features;  // B x N x H/4 x W/4
  Tensor logits;    // B x C x H x W
};

/// Input standardization, three 3x3 conv+ReLU blocks (strides 1, 2, 2) and a 1x1 classifier whose
/// logits are upsampled back to the input size.
class SegNet {
 public:
  /// Weights and biases uniform in +-sqrt(1/fan_in).
  SegNet(const SegNetShape& shape, std::uint64_t seed);

  ForwardResult forward(const Tensor& images) const;
  Tensor encode(const Tensor& images) const;
  /// Encoder pass with graph recording off; the result is a constant.
  Tensor frozen_forward(const Tensor& images) const;
  Tensor head(const Tensor& features) const;

  const SegNetShape& shape() const { return shape_; }
  std::vector<NamedTensor>& parameters() { return params_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  void zero_grad();

  /// Copies values of every parameter from a checkpoint.
  void load(const std::vector<NamedTensor>& checkpoint);

 private:
  void check_input(const Tensor& images) const;
  const Tensor& param(std::size_t i) const { return params_[i].tensor; }

  SegNetShape shape_;
  std::vector<NamedTensor> params_;
};

}  // namespace cdpcl::segtrain
