#define EIGEN_DONT_PARALLELIZE
#include "cdpcl/kernels/conv2d.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <utility>
#include <vector>

#include "cdpcl/kernels/parallel.hpp"

namespace cdpcl::kernels {
namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const RowMatrix>;
using Map = Eigen::Map<RowMatrix>;

// Output columns [lo, hi) whose input column ox*stride + kx - pad is inside the image.
std::pair<std::size_t, std::size_t> valid_columns(const ConvGeometry& g, std::size_t kx) {
  const auto ow = g.out_w();
  std::size_t lo = 0;
  while (lo < ow && lo * g.stride + kx < g.pad) ++lo;
  std::size_t hi = ow;
  while (hi > lo && (hi - 1) * g.stride + kx >= g.pad + g.in_w) --hi;
  return {lo, hi};
}

bool is_pointwise(const ConvGeometry& g) { return g.kernel == 1 && g.stride == 1 && g.pad == 0; }

// col is patch x (out_h*out_w); row index = (c*k + ky)*k + kx.
void im2col(const ConvGeometry& g, const double* image, double* col) {
  const auto oh = g.out_h(), ow = g.out_w(), k = g.kernel, stride = g.stride;
  const auto plane = oh * ow;
  for (std::size_t kx = 0; kx < k; ++kx) {
    const auto [lo, hi] = valid_columns(g, kx);
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      const double* src = image + c * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < k; ++ky) {
        double* dst = col + ((c * k + ky) * k + kx) * plane;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          double* row = dst + oy * ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h) || lo >= hi) {
            std::fill(row, row + ow, 0.0);
            continue;
          }
          std::fill(row, row + lo, 0.0);
          std::fill(row + hi, row + ow, 0.0);
          const double* srow = src + iy * static_cast<std::ptrdiff_t>(g.in_w) + (lo * stride + kx - g.pad);
          if (stride == 1) {
            std::copy(srow, srow + (hi - lo), row + lo);
          } else {
            for (std::size_t ox = lo; ox < hi; ++ox, srow += stride) row[ox] = *srow;
          }
        }
      }
    }
  }
}

void col2im_add(const ConvGeometry& g, const double* col, double* image) {
  const auto oh = g.out_h(), ow = g.out_w(), k = g.kernel, stride = g.stride;
  const auto plane = oh * ow;
  for (std::size_t kx = 0; kx < k; ++kx) {
    const auto [lo, hi] = valid_columns(g, kx);
    if (lo >= hi) continue;
    for (std::size_t c = 0; c < g.in_channels; ++c) {
      double* dst = image + c * g.in_h * g.in_w;
      for (std::size_t ky = 0; ky < k; ++ky) {
        const double* src = col + ((c * k + ky) * k + kx) * plane;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
          double* drow = dst + iy * static_cast<std::ptrdiff_t>(g.in_w) + (lo * stride + kx - g.pad);
          const double* srow = src + oy * ow;
          for (std::size_t ox = lo; ox < hi; ++ox, drow += stride) *drow += srow[ox];
        }
      }
    }
  }
}

}  // namespace

bool ConvGeometry::valid() const {
  return batch > 0 && in_channels > 0 && out_channels > 0 && kernel > 0 && stride > 0 &&
         in_h + 2 * pad >= kernel && in_w + 2 * pad >= kernel;
}

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  const auto plane = g.out_h() * g.out_w();
  const auto in_image = g.in_channels * g.in_h * g.in_w;
  const auto out_image = g.out_channels * plane;
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
  const int threads = thread_count();
  const ConstMap w(weight.data(), g.out_channels, g.patch());
  const bool pointwise = is_pointwise(g);

#pragma omp parallel num_threads(threads) if (threads > 1)
  {
    std::vector<double> col(pointwise ? 0 : g.patch() * plane);
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < batch; ++b) {
      const double* cols = input.data() + b * in_image;
      if (!pointwise) {
        im2col(g, cols, col.data());
        cols = col.data();
      }
      Map out(output.data() + b * out_image, g.out_channels, plane);
      out.noalias() = w * ConstMap(cols, g.patch(), plane);
      if (!bias.empty()) {
        for (std::size_t o = 0; o < g.out_channels; ++o) out.row(o).array() += bias[o];
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_output, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  const auto plane = g.out_h() * g.out_w();
  const auto in_image = g.in_channels * g.in_h * g.in_w;
  const auto out_image = g.out_channels * plane;
  const auto batch = static_cast<std::ptrdiff_t>(g.batch);
  const int threads = thread_count();
  const ConstMap w(weight.data(), g.out_channels, g.patch());
  const bool want_w = !grad_weight.empty();
  const bool pointwise = is_pointwise(g);

  // Per-image weight-gradient partials are reduced in image order below, so
  // the result is independent of the thread count.
  std::vector<double> partial_w(want_w ? g.batch * g.weight_size() : 0);

#pragma omp parallel num_threads(threads) if (threads > 1)
  {
    std::vector<double> col(g.patch() * plane);
#pragma omp for schedule(static)
    for (std::ptrdiff_t b = 0; b < batch; ++b) {
      const ConstMap gout(grad_output.data() + b * out_image, g.out_channels, plane);
      if (want_w) {
        const double* cols = input.data() + b * in_image;
        if (!pointwise) {
          im2col(g, cols, col.data());
          cols = col.data();
        }
        Map pw(partial_w.data() + b * g.weight_size(), g.out_channels, g.patch());
        pw.noalias() = gout * ConstMap(cols, g.patch(), plane).transpose();
      }
      if (!grad_input.empty()) {
        Map gin(grad_input.data() + b * in_image, g.patch(), plane);
        if (pointwise) {
          gin.noalias() += w.transpose() * gout;
        } else {
          Map dcol(col.data(), g.patch(), plane);
          dcol.noalias() = w.transpose() * gout;
          col2im_add(g, col.data(), grad_input.data() + b * in_image);
        }
      }
    }
  }

  if (want_w) {
    for (std::size_t b = 0; b < g.batch; ++b) {
      const double* pw = partial_w.data() + b * g.weight_size();
      for (std::size_t i = 0; i < g.weight_size(); ++i) grad_weight[i] += pw[i];
    }
  }
  if (!grad_bias.empty()) {
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (std::size_t o = 0; o < g.out_channels; ++o) {
        const double* go = grad_output.data() + b * out_image + o * plane;
        double s = 0.0;
        for (std::size_t p = 0; p < plane; ++p) s += go[p];
        grad_bias[o] += s;
      }
    }
  }
}

namespace reference {

void conv2d_forward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                    std::span<const double> bias, std::span<double> output) {
  const auto oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[o];
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ky = 0; ky < k; ++ky) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                acc += weight[((o * g.in_channels + c) * k + ky) * k + kx] *
                       input[((b * g.in_channels + c) * g.in_h + iy) * g.in_w + ix];
              }
            }
          }
          output[((b * g.out_channels + o) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, std::span<const double> input, std::span<const double> weight,
                     std::span<const double> grad_output, std::span<double> grad_input,
                     std::span<double> grad_weight, std::span<double> grad_bias) {
  const auto oh = g.out_h(), ow = g.out_w(), k = g.kernel;
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.out_channels; ++o) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double go = grad_output[((b * g.out_channels + o) * oh + oy) * ow + ox];
          if (!grad_bias.empty()) grad_bias[o] += go;
          for (std::size_t c = 0; c < g.in_channels; ++c) {
            for (std::size_t ky = 0; ky < k; ++ky) {
              const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad);
              if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < k; ++kx) {
                const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad);
                if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.in_w)) continue;
                const auto wi = ((o * g.in_channels + c) * k + ky) * k + kx;
                const auto xi = ((b * g.in_channels + c) * g.in_h + iy) * g.in_w + ix;
                if (!grad_weight.empty()) grad_weight[wi] += go * input[xi];
                if (!grad_input.empty()) grad_input[xi] += go * weight[wi];
              }
            }
          }
        }
      }
    }
  }
}

}  // namespace reference
}  // namespace cdpcl::kernels
