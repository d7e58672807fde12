#include "cdpcl/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cdpcl/errors.hpp"
#include "cdpcl/kernels/conv2d.hpp"
#include "cdpcl/numerics/diagnostics.hpp"

namespace cdpcl {
namespace {

using detail::GradSink;

[[noreturn]] void shape_error(const std::string& op, const Shape& a, const Shape& b) {
  throw DimensionError(op + ": incompatible shapes " + shape_string(a) + " and " + shape_string(b));
}

Shape broadcast_shape(const std::string& op, const Shape& a, const Shape& b) {
  const auto rank = std::max(a.size(), b.size());
  Shape out(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const auto da = i < rank - a.size() ? 1 : a[i - (rank - a.size())];
    const auto db = i < rank - b.size() ? 1 : b[i - (rank - b.size())];
    if (da != db && da != 1 && db != 1) shape_error(op, a, b);
    out[i] = da == 1 ? db : da;
  }
  return out;
}

// Row-major strides of `in` aligned to `out`, zero on broadcast axes.
std::vector<std::size_t> broadcast_strides(const Shape& in, const Shape& out) {
  std::vector<std::size_t> strides(out.size(), 0);
  std::size_t stride = 1;
  for (std::size_t k = 0; k < in.size(); ++k) {
    const auto i = in.size() - 1 - k;
    const auto o = out.size() - 1 - k;
    strides[o] = in[i] == 1 ? 0 : stride;
    stride *= in[i];
  }
  return strides;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <class F>
void for_each_broadcast(const Shape& out, const Shape& sa, const Shape& sb, F&& f) {
  const auto n = numel_of(out);
  if (sa == out && sb == out) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const auto st_a = broadcast_strides(sa, out);
  const auto st_b = broadcast_strides(sb, out);
  std::vector<std::size_t> idx(out.size(), 0);
  std::size_t ia = 0, ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t d = out.size(); d-- > 0;) {
      ++idx[d];
      ia += st_a[d];
      ib += st_b[d];
      if (idx[d] < out[d]) break;
      ia -= st_a[d] * out[d];
      ib -= st_b[d] * out[d];
      idx[d] = 0;
    }
  }
}

struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const std::string& op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    throw DimensionError(op + ": axis " + std::to_string(axis) + " out of range for shape " + shape_string(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.n = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape reduced_shape(const Shape& shape, std::size_t axis, bool keepdim) {
  Shape out = shape;
  if (keepdim) {
    out[axis] = 1;
  } else {
    out.erase(out.begin() + static_cast<std::ptrdiff_t>(axis));
  }
  return out;
}

double guard_positive(double x) {
  if (x < kGuardEpsilon) {
    diagnostics::record(diagnostics::Warning::NumericGuard);
    return kGuardEpsilon;
  }
  return x;
}

double guarded_denominator(double b) { return std::abs(b) < kGuardEpsilon ? std::copysign(kGuardEpsilon, b) : b; }

template <class Fwd, class Bwd>
Tensor binary(const std::string& op, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
  const auto out_shape = broadcast_shape(op, a.shape(), b.shape());
  std::vector<double> out(numel_of(out_shape));
  const auto va = a.values();
  const auto vb = b.values();
  for_each_broadcast(out_shape, a.shape(), b.shape(),
                     [&](std::size_t i, std::size_t ia, std::size_t ib) { out[i] = fwd(va[ia], vb[ib]); });
  return make_result(op, out_shape, std::move(out), {a, b},
                     [a, b, out_shape, bwd](std::span<const double> g, const GradSink& sink) {
                       double* ga = sink[0];
                       double* gb = sink[1];
                       const auto va = a.values();
                       const auto vb = b.values();
                       for_each_broadcast(out_shape, a.shape(), b.shape(),
                                          [&](std::size_t i, std::size_t ia, std::size_t ib) {
                                            const auto [da, db] = bwd(va[ia], vb[ib], g[i]);
                                            if (ga) ga[ia] += da;
                                            if (gb) gb[ib] += db;
                                          });
                     });
}

template <class Fwd, class Bwd>
Tensor unary(const std::string& op, const Tensor& a, Fwd fwd, Bwd bwd) {
  const auto va = a.values();
  std::vector<double> out(va.size());
  for (std::size_t i = 0; i < va.size(); ++i) out[i] = fwd(va[i]);
  return make_result(op, a.shape(), std::move(out), {a},
                     [a, bwd](std::span<const double> g, const GradSink& sink) {
                       double* ga = sink[0];
                       if (!ga) return;
                       const auto va = a.values();
                       for (std::size_t i = 0; i < va.size(); ++i) ga[i] += bwd(va[i], g[i]);
                     });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double, double g) { return std::pair{g, g}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double, double g) { return std::pair{g, -g}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double x, double y, double g) { return std::pair{g * y, g * x}; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (double y : b.values()) {
    if (std::abs(y) < kGuardEpsilon) diagnostics::record(diagnostics::Warning::NumericGuard);
  }
  return binary(
      "div", a, b, [](double x, double y) { return x / guarded_denominator(y); },
      [](double x, double y, double g) {
        const double d = guarded_denominator(y);
        const double db = d == y ? -g * x / (d * d) : 0.0;
        return std::pair{g / d, db};
      });
}

Tensor add_scalar(const Tensor& a, double s) {
  return unary(
      "add_scalar", a, [s](double x) { return x + s; }, [](double, double g) { return g; });
}

Tensor mul_scalar(const Tensor& a, double s) {
  return unary(
      "mul_scalar", a, [s](double x) { return x * s; }, [s](double, double g) { return g * s; });
}

Tensor abs(const Tensor& a) {
  return unary(
      "abs", a, [](double x) { return std::abs(x); },
      [](double x, double g) { return x > 0 ? g : (x < 0 ? -g : 0.0); });
}

Tensor exp(const Tensor& a) {
  return unary(
      "exp", a, [](double x) { return std::exp(x); }, [](double x, double g) { return g * std::exp(x); });
}

Tensor log(const Tensor& a) {
  return unary(
      "log", a, [](double x) { return std::log(guard_positive(x)); },
      [](double x, double g) { return x < kGuardEpsilon ? 0.0 : g / x; });
}

Tensor relu(const Tensor& a) {
  return unary(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; }, [](double x, double g) { return x > 0 ? g : 0.0; });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double x : a.values()) s += x;
  const auto n = a.numel();
  return make_result("sum", Shape{}, {s}, {a}, [n](std::span<const double> g, const GradSink& sink) {
    if (double* ga = sink[0]) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[0];
    }
  });
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw DimensionError("mean: empty tensor");
  double s = 0.0;
  for (double x : a.values()) s += x;
  const auto n = a.numel();
  const double inv = 1.0 / static_cast<double>(n);
  return make_result("mean", Shape{}, {s * inv}, {a}, [n, inv](std::span<const double> g, const GradSink& sink) {
    if (double* ga = sink[0]) {
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[0] * inv;
    }
  });
}

namespace {

Tensor axis_sum(const std::string& op, const Tensor& a, std::size_t axis, bool keepdim, double scale) {
  const auto s = split_axis(op, a.shape(), axis);
  const auto va = a.values();
  std::vector<double> out(s.outer * s.inner, 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.n; ++k) {
      for (std::size_t i = 0; i < s.inner; ++i) out[o * s.inner + i] += va[(o * s.n + k) * s.inner + i];
    }
  }
  if (scale != 1.0) {
    for (auto& x : out) x *= scale;
  }
  return make_result(op, reduced_shape(a.shape(), axis, keepdim), std::move(out), {a},
                     [s, scale](std::span<const double> g, const GradSink& sink) {
                       double* ga = sink[0];
                       if (!ga) return;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t k = 0; k < s.n; ++k) {
                           for (std::size_t i = 0; i < s.inner; ++i) {
                             ga[(o * s.n + k) * s.inner + i] += g[o * s.inner + i] * scale;
                           }
                         }
                       }
                     });
}

}  // namespace

Tensor sum(const Tensor& a, std::size_t axis, bool keepdim) { return axis_sum("sum", a, axis, keepdim, 1.0); }

Tensor mean(const Tensor& a, std::size_t axis, bool keepdim) {
  const auto n = split_axis("mean", a.shape(), axis).n;
  if (n == 0) throw DimensionError("mean: empty axis");
  return axis_sum("mean", a, axis, keepdim, 1.0 / static_cast<double>(n));
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) shape_error("matmul", a.shape(), b.shape());
  const auto m = a.dim(0), k = a.dim(1), n = b.dim(1);
  const auto va = a.values();
  const auto vb = b.values();
  std::vector<double> out(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double x = va[i * k + p];
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += x * vb[p * n + j];
    }
  }
  return make_result("matmul", Shape{m, n}, std::move(out), {a, b},
                     [a, b, m, k, n](std::span<const double> g, const GradSink& sink) {
                       const auto va = a.values();
                       const auto vb = b.values();
                       if (double* ga = sink[0]) {
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t p = 0; p < k; ++p) {
                             double acc = 0.0;
                             for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * vb[p * n + j];
                             ga[i * k + p] += acc;
                           }
                         }
                       }
                       if (double* gb = sink[1]) {
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t p = 0; p < k; ++p) {
                             const double x = va[i * k + p];
                             for (std::size_t j = 0; j < n; ++j) gb[p * n + j] += x * g[i * n + j];
                           }
                         }
                       }
                     });
}

Tensor transpose(const Tensor& a) {
  if (a.rank() != 2) throw DimensionError("transpose: expected a matrix, got " + shape_string(a.shape()));
  const auto m = a.dim(0), n = a.dim(1);
  const auto va = a.values();
  std::vector<double> out(m * n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = va[i * n + j];
  }
  return make_result("transpose", Shape{n, m}, std::move(out), {a},
                     [m, n](std::span<const double> g, const GradSink& sink) {
                       if (double* ga = sink[0]) {
                         for (std::size_t i = 0; i < m; ++i) {
                           for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += g[j * m + i];
                         }
                       }
                     });
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, Conv2dOptions opts) {
  if (x.rank() != 4 || weight.rank() != 4 || weight.dim(1) != x.dim(1) || weight.dim(2) != weight.dim(3)) {
    shape_error("conv2d", x.shape(), weight.shape());
  }
  const bool has_bias = bias.numel() > 0;
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != weight.dim(0))) {
    shape_error("conv2d", weight.shape(), bias.shape());
  }
  kernels::ConvGeometry geo;
  geo.batch = x.dim(0);
  geo.in_channels = x.dim(1);
  geo.in_h = x.dim(2);
  geo.in_w = x.dim(3);
  geo.out_channels = weight.dim(0);
  geo.kernel = weight.dim(2);
  geo.stride = opts.stride;
  geo.pad = opts.pad;
  if (!geo.valid()) shape_error("conv2d", x.shape(), weight.shape());

  std::vector<double> out(geo.output_size());
  kernels::conv2d_forward(geo, x.values(), weight.values(),
                          has_bias ? bias.values() : std::span<const double>{}, out);
  std::vector<Tensor> inputs{x, weight};
  if (has_bias) inputs.push_back(bias);
  return make_result("conv2d", Shape{geo.batch, geo.out_channels, geo.out_h(), geo.out_w()}, std::move(out),
                     std::move(inputs),
                     [x, weight, geo, has_bias](std::span<const double> g, const GradSink& sink) {
                       double* gx = sink[0];
                       double* gw = sink[1];
                       double* gb = has_bias ? sink[2] : nullptr;
                       kernels::conv2d_backward(
                           geo, x.values(), weight.values(), g,
                           gx ? std::span<double>(gx, geo.input_size()) : std::span<double>{},
                           gw ? std::span<double>(gw, geo.weight_size()) : std::span<double>{},
                           gb ? std::span<double>(gb, geo.out_channels) : std::span<double>{});
                     });
}

Tensor softmax(const Tensor& a, std::size_t axis) {
  const auto s = split_axis("softmax", a.shape(), axis);
  const auto va = a.values();
  std::vector<double> out(va.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const auto at = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.n; ++k) m = std::max(m, va[at(k)]);
      double z = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) z += (out[at(k)] = std::exp(va[at(k)] - m));
      for (std::size_t k = 0; k < s.n; ++k) out[at(k)] /= z;
    }
  }
  auto y = out;
  return make_result("softmax", a.shape(), std::move(out), {a},
                     [s, y = std::move(y)](std::span<const double> g, const GradSink& sink) {
                       double* ga = sink[0];
                       if (!ga) return;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t i = 0; i < s.inner; ++i) {
                           const auto at = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
                           double dot = 0.0;
                           for (std::size_t k = 0; k < s.n; ++k) dot += g[at(k)] * y[at(k)];
                           for (std::size_t k = 0; k < s.n; ++k) ga[at(k)] += y[at(k)] * (g[at(k)] - dot);
                         }
                       }
                     });
}

namespace {

// Max-shifted log-sum-exp of each slice; also returns the softmax weights.
std::vector<double> slice_lse(const AxisSplit& s, std::span<const double> va, std::vector<double>& prob) {
  std::vector<double> lse(s.outer * s.inner);
  prob.assign(va.size(), 0.0);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const auto at = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
      double m = -std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < s.n; ++k) m = std::max(m, va[at(k)]);
      if (m == -std::numeric_limits<double>::infinity()) {
        // NaN entries are skipped by max; let them propagate instead of reporting a masked slice
        bool nan = false;
        for (std::size_t k = 0; k < s.n; ++k) nan = nan || std::isnan(va[at(k)]);
        if (!nan) throw ContractError("logsumexp: every entry of a slice is -inf");
        m = std::numeric_limits<double>::quiet_NaN();
      }
      double z = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) z += (prob[at(k)] = std::exp(va[at(k)] - m));
      for (std::size_t k = 0; k < s.n; ++k) prob[at(k)] /= z;
      lse[o * s.inner + i] = m + std::log(z);
    }
  }
  return lse;
}

}  // namespace

Tensor log_softmax(const Tensor& a, std::size_t axis) {
  const auto s = split_axis("log_softmax", a.shape(), axis);
  const auto va = a.values();
  std::vector<double> prob;
  const auto lse = slice_lse(s, va, prob);
  std::vector<double> out(va.size());
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < s.n; ++k) {
      for (std::size_t i = 0; i < s.inner; ++i) {
        const auto idx = (o * s.n + k) * s.inner + i;
        out[idx] = va[idx] - lse[o * s.inner + i];
      }
    }
  }
  return make_result("log_softmax", a.shape(), std::move(out), {a},
                     [s, prob = std::move(prob)](std::span<const double> g, const GradSink& sink) {
                       double* ga = sink[0];
                       if (!ga) return;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t i = 0; i < s.inner; ++i) {
                           const auto at = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
                           double total = 0.0;
                           for (std::size_t k = 0; k < s.n; ++k) total += g[at(k)];
                           for (std::size_t k = 0; k < s.n; ++k) ga[at(k)] += g[at(k)] - prob[at(k)] * total;
                         }
                       }
                     });
}

Tensor logsumexp(const Tensor& a, std::size_t axis, bool keepdim) {
  const auto s = split_axis("logsumexp", a.shape(), axis);
  std::vector<double> prob;
  auto lse = slice_lse(s, a.values(), prob);
  return make_result("logsumexp", reduced_shape(a.shape(), axis, keepdim), std::move(lse), {a},
                     [s, prob = std::move(prob)](std::span<const double> g, const GradSink& sink) {
                       double* ga = sink[0];
                       if (!ga) return;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t k = 0; k < s.n; ++k) {
                           for (std::size_t i = 0; i < s.inner; ++i) {
                             const auto idx = (o * s.n + k) * s.inner + i;
                             ga[idx] += g[o * s.inner + i] * prob[idx];
                           }
                         }
                       }
                     });
}

Tensor l2_normalize(const Tensor& a, std::size_t axis, double eps) {
  const auto s = split_axis("l2_normalize", a.shape(), axis);
  const auto va = a.values();
  std::vector<double> out(va.size());
  std::vector<double> norms(s.outer * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t i = 0; i < s.inner; ++i) {
      const auto at = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
      double sq = 0.0;
      for (std::size_t k = 0; k < s.n; ++k) sq += va[at(k)] * va[at(k)];
      const double norm = std::sqrt(sq);
      if (norm < eps) diagnostics::record(diagnostics::Warning::NumericGuard);
      const double d = std::max(norm, eps);
      norms[o * s.inner + i] = norm;
      for (std::size_t k = 0; k < s.n; ++k) out[at(k)] = va[at(k)] / d;
    }
  }
  auto y = out;
  return make_result(
      "l2_normalize", a.shape(), std::move(out), {a},
      [s, eps, y = std::move(y), norms = std::move(norms)](std::span<const double> g, const GradSink& sink) {
        double* ga = sink[0];
        if (!ga) return;
        for (std::size_t o = 0; o < s.outer; ++o) {
          for (std::size_t i = 0; i < s.inner; ++i) {
            const auto at = [&](std::size_t k) { return (o * s.n + k) * s.inner + i; };
            const double norm = norms[o * s.inner + i];
            if (norm < eps) {
              for (std::size_t k = 0; k < s.n; ++k) ga[at(k)] += g[at(k)] / eps;
              continue;
            }
            double dot = 0.0;
            for (std::size_t k = 0; k < s.n; ++k) dot += y[at(k)] * g[at(k)];
            for (std::size_t k = 0; k < s.n; ++k) ga[at(k)] += (g[at(k)] - y[at(k)] * dot) / norm;
          }
        }
      });
}

Tensor upsample_nearest(const Tensor& a, std::size_t factor) {
  if (a.rank() != 4 || factor == 0) {
    throw DimensionError("upsample_nearest: expected rank-4 input and factor > 0, got " + shape_string(a.shape()));
  }
  const auto planes = a.dim(0) * a.dim(1), h = a.dim(2), w = a.dim(3);
  const auto oh = h * factor, ow = w * factor;
  const auto va = a.values();
  std::vector<double> out(planes * oh * ow);
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t y = 0; y < oh; ++y) {
      const double* src = va.data() + (p * h + y / factor) * w;
      double* dst = out.data() + (p * oh + y) * ow;
      for (std::size_t x = 0; x < ow; ++x) dst[x] = src[x / factor];
    }
  }
  return make_result("upsample_nearest", Shape{a.dim(0), a.dim(1), oh, ow}, std::move(out), {a},
                     [planes, h, w, oh, ow, factor](std::span<const double> g, const GradSink& sink) {
                       double* ga = sink[0];
                       if (!ga) return;
                       for (std::size_t p = 0; p < planes; ++p) {
                         for (std::size_t y = 0; y < oh; ++y) {
                           double* dst = ga + (p * h + y / factor) * w;
                           const double* src = g.data() + (p * oh + y) * ow;
                           for (std::size_t x = 0; x < ow; ++x) dst[x / factor] += src[x];
                         }
                       }
                     });
}

Tensor index_select(const Tensor& a, std::size_t axis, const std::vector<std::size_t>& indices) {
  const auto s = split_axis("index_select", a.shape(), axis);
  for (auto idx : indices) {
    if (idx >= s.n) {
      throw DimensionError("index_select: index " + std::to_string(idx) + " out of range for shape " +
                           shape_string(a.shape()));
    }
  }
  const auto va = a.values();
  const auto m = indices.size();
  std::vector<double> out(s.outer * m * s.inner);
  for (std::size_t o = 0; o < s.outer; ++o) {
    for (std::size_t k = 0; k < m; ++k) {
      std::copy_n(va.data() + (o * s.n + indices[k]) * s.inner, s.inner, out.data() + (o * m + k) * s.inner);
    }
  }
  Shape shape = a.shape();
  shape[axis] = m;
  return make_result("index_select", std::move(shape), std::move(out), {a},
                     [s, m, indices](std::span<const double> g, const GradSink& sink) {
                       double* ga = sink[0];
                       if (!ga) return;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         for (std::size_t k = 0; k < m; ++k) {
                           double* dst = ga + (o * s.n + indices[k]) * s.inner;
                           const double* src = g.data() + (o * m + k) * s.inner;
                           for (std::size_t i = 0; i < s.inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor slice(const Tensor& a, std::size_t axis, std::size_t begin, std::size_t end) {
  const auto n = split_axis("slice", a.shape(), axis).n;
  if (begin > end || end > n) {
    throw DimensionError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") invalid for shape " + shape_string(a.shape()));
  }
  std::vector<std::size_t> indices(end - begin);
  for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = begin + i;
  return index_select(a, axis, indices);
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw DimensionError("concat: no inputs");
  const auto& first = parts.front().shape();
  split_axis("concat", first, axis);
  std::size_t total = 0;
  for (const auto& p : parts) {
    auto a = p.shape();
    auto b = first;
    if (a.size() != b.size()) shape_error("concat", b, a);
    a[axis] = b[axis] = 0;
    if (a != b) shape_error("concat", first, p.shape());
    total += p.dim(axis);
  }
  const auto s = split_axis("concat", first, axis);
  std::vector<double> out(s.outer * total * s.inner);
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const auto n = p.dim(axis);
    const auto vp = p.values();
    for (std::size_t o = 0; o < s.outer; ++o) {
      std::copy_n(vp.data() + o * n * s.inner, n * s.inner, out.data() + (o * total + offset) * s.inner);
    }
    offsets.push_back(offset);
    offset += n;
  }
  Shape shape = first;
  shape[axis] = total;
  std::vector<std::size_t> sizes;
  for (const auto& p : parts) sizes.push_back(p.dim(axis));
  return make_result("concat", std::move(shape), std::move(out), parts,
                     [s, total, offsets, sizes](std::span<const double> g, const GradSink& sink) {
                       for (std::size_t j = 0; j < sizes.size(); ++j) {
                         double* gp = sink[j];
                         if (!gp) continue;
                         const auto n = sizes[j];
                         for (std::size_t o = 0; o < s.outer; ++o) {
                           const double* src = g.data() + (o * total + offsets[j]) * s.inner;
                           double* dst = gp + o * n * s.inner;
                           for (std::size_t i = 0; i < n * s.inner; ++i) dst[i] += src[i];
                         }
                       }
                     });
}

Tensor broadcast_to(const Tensor& a, const Shape& shape) {
  if (broadcast_shape("broadcast", a.shape(), shape) != shape) shape_error("broadcast", a.shape(), shape);
  std::vector<double> out(numel_of(shape));
  const auto va = a.values();
  for_each_broadcast(shape, a.shape(), shape, [&](std::size_t i, std::size_t ia, std::size_t) { out[i] = va[ia]; });
  return make_result("broadcast", shape, std::move(out), {a},
                     [in = a.shape(), shape](std::span<const double> g, const GradSink& sink) {
                       double* ga = sink[0];
                       if (!ga) return;
                       for_each_broadcast(shape, in, shape,
                                          [&](std::size_t i, std::size_t ia, std::size_t) { ga[ia] += g[i]; });
                     });
}

Tensor reshape(const Tensor& a, Shape shape) {
  if (numel_of(shape) != a.numel()) shape_error("reshape", a.shape(), shape);
  std::vector<double> out(a.values().begin(), a.values().end());
  const auto n = a.numel();
  return make_result("reshape", std::move(shape), std::move(out), {a},
                     [n](std::span<const double> g, const GradSink& sink) {
                       if (double* ga = sink[0]) {
                         for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
                       }
                     });
}

}  // namespace cdpcl
