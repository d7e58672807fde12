#pragma once

#include <cstddef>
#include <span>

namespace cdpcl::kernels {

/// Square-kernel 2-D convolution over NCHW input, OIHW weights.
struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  std::size_t patch() const { return in_channels * kernel * kernel; }
  std::size_t input_size() const { return batch * in_channels * in_h * in_w; }
  std::size_t weight_size() const { return out_channels * patch(); }
  std::size_t output_size() const { return batch * out_channels * out_h() * out_w(); }
  bool valid() const;
};

// im2col + GEMM per image, images distributed over OpenMP threads.
void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output);

// Gradients are accumulated (+=). Pass an empty span to skip a gradient.
void conv2d_backward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_output, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias);

namespace reference {

// Direct seven-deep loop nest. Serial; kept as the test oracle and bench baseline.
void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output);

void conv2d_backward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_output, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias);

}  // namespace reference
}  // namespace cdpcl::kernels
