#include "cdpcl/verify/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cdpcl::verify::oracle {
namespace {

std::vector<double> unit(const std::vector<double>& v) {
  double sq = 0;
  for (double x : v) sq += x * x;
  const double n = std::max(std::sqrt(sq), 1e-12);
  std::vector<double> out;
  for (double x : v) out.push_back(x / n);
  return out;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0;
  for (std::size_t j = 0; j < a.size(); ++j) s += a[j] * b[j];
  return s;
}

}  // namespace

double seg_loss(const std::vector<double>& logits, std::size_t batch, std::size_t classes, std::size_t height,
                std::size_t width, const std::vector<std::int32_t>& labels, std::int32_t ignore) {
  double total = 0;
  std::size_t count = 0;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        const auto label = labels[(b * height + y) * width + x];
        if (label == ignore) continue;
        auto logit = [&](std::size_t c) { return logits[((b * classes + c) * height + y) * width + x]; };
        double m = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < classes; ++c) m = std::max(m, logit(c));
        double z = 0;
        for (std::size_t c = 0; c < classes; ++c) z += std::exp(logit(c) - m);
        total += m + std::log(z) - logit(static_cast<std::size_t>(label));
        ++count;
      }
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

Pooled pool(const std::vector<double>& features, std::size_t batch, std::size_t dim, std::size_t h, std::size_t w,
            const std::vector<std::int32_t>& labels, std::size_t height, std::size_t width, std::size_t classes,
            std::int32_t ignore) {
  Pooled out{Matrix(classes, std::vector<double>(dim, 0.0)), std::vector<bool>(classes, false)};
  std::vector<double> count(classes, 0.0);
  const auto sy = height / h, sx = width / w;
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const auto label = labels[(b * height + y * sy) * width + x * sx];
        if (label == ignore) continue;
        const auto c = static_cast<std::size_t>(label);
        for (std::size_t n = 0; n < dim; ++n) out.features[c][n] += features[((b * dim + n) * h + y) * w + x];
        count[c] += 1;
      }
    }
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (count[c] == 0) continue;
    out.present[c] = true;
    for (auto& v : out.features[c]) v /= count[c];
  }
  return out;
}

double contrast(const Matrix& protos, const std::vector<bool>& initialized, const Matrix& feats,
                const std::vector<bool>& present, const Matrix* weights, const ContrastOptions& opt) {
  const auto classes = protos.size();
  std::vector<std::size_t> active;
  for (std::size_t c = 0; c < classes; ++c) {
    if (present[c] && initialized[c]) active.push_back(c);
  }
  if (active.empty()) return 0.0;
  if (!opt.include_positive && active.size() == 1) return 0.0;
  double total = 0;
  for (auto i : active) {
    const auto ci = opt.normalize ? unit(feats[i]) : feats[i];
    std::vector<double> logit;
    double positive = 0;
    for (auto k : active) {
      const auto pk = opt.normalize ? unit(protos[k]) : protos[k];
      const double wik = weights ? (*weights)[i][k] : 1.0;
      const double l = dot(ci, pk) * wik / opt.tau;
      if (k == i) {
        positive = l;
        if (!opt.include_positive) continue;
      }
      logit.push_back(l);
    }
    const double m = *std::max_element(logit.begin(), logit.end());
    double z = 0;
    for (double l : logit) z += std::exp(l - m);
    total += m + std::log(z) - positive;
  }
  return total;
}

double pcl(const Matrix& protos, const std::vector<bool>& initialized, const Matrix& feats,
           const std::vector<bool>& present, const ContrastOptions& opt) {
  return contrast(protos, initialized, feats, present, nullptr, opt);
}

double upcl(const Matrix& protos, const Matrix& u, const std::vector<bool>& initialized, const Matrix& feats,
            const std::vector<bool>& present, const ContrastOptions& opt) {
  Matrix weighted = protos;
  for (std::size_t c = 0; c < protos.size(); ++c) {
    for (std::size_t n = 0; n < protos[c].size(); ++n) weighted[c][n] = protos[c][n] * u[c][n];
  }
  return contrast(weighted, initialized, feats, present, nullptr, opt);
}

double hpcl(const Matrix& protos, const Matrix& h, const std::vector<bool>& initialized, const Matrix& feats,
            const std::vector<bool>& present, const ContrastOptions& opt) {
  Matrix w = h;
  for (std::size_t i = 0; i < h.size(); ++i) {
    for (std::size_t k = 0; k < h.size(); ++k) w[i][k] = i == k ? h[i][k] : 1.0 / h[i][k];
  }
  return contrast(protos, initialized, feats, present, &w, opt);
}

Matrix difference(const Matrix& src, const Matrix& aug, const std::vector<bool>& valid) {
  Matrix d(src.size(), std::vector<double>(src[0].size(), 0.0));
  for (std::size_t c = 0; c < src.size(); ++c) {
    if (!valid[c]) continue;
    for (std::size_t n = 0; n < src[c].size(); ++n) d[c][n] = std::fabs(src[c][n] - aug[c][n]);
  }
  return d;
}

Matrix uncertainty(const Matrix& d, const std::vector<bool>& valid) {
  const auto classes = d.size(), dim = d[0].size();
  Matrix u(classes, std::vector<double>(dim, 1.0));
  if (std::count(valid.begin(), valid.end(), true) < 2) return u;
  for (std::size_t n = 0; n < dim; ++n) {
    double z = 0;
    for (std::size_t c = 0; c < classes; ++c) {
      if (valid[c]) z += std::exp(d[c][n]);
    }
    for (std::size_t c = 0; c < classes; ++c) {
      if (valid[c]) u[c][n] = 1.0 - std::exp(d[c][n]) / z;
    }
  }
  return u;
}

Matrix similarity(const Matrix& src, const Matrix& aug, const std::vector<bool>& valid) {
  const auto classes = src.size();
  Matrix s(classes, std::vector<double>(classes, 0.0));
  auto norm = [](const std::vector<double>& v) { return std::sqrt(dot(v, v)); };
  std::vector<bool> usable(classes);
  for (std::size_t c = 0; c < classes; ++c) usable[c] = valid[c] && norm(src[c]) >= 1e-12 && norm(aug[c]) >= 1e-12;
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t k = 0; k < classes; ++k) {
      if (!usable[i] || !usable[k]) {
        s[i][k] = i == k ? 1.0 : 0.0;
      } else {
        s[i][k] = std::min(1.0, std::max(-1.0, dot(src[i], aug[k]) / (norm(src[i]) * norm(aug[k]))));
      }
    }
  }
  return s;
}

Matrix hard_weight(const Matrix& s, double floor) {
  Matrix h = s;
  for (std::size_t i = 0; i < s.size(); ++i) {
    for (std::size_t k = 0; k < s.size(); ++k) {
      const double m_minus_e = i == k ? 0.0 : 1.0;
      h[i][k] = std::max(std::fabs(m_minus_e - s[i][k]), floor);
    }
  }
  return h;
}

std::vector<std::vector<std::uint64_t>> confusion(const std::vector<std::int32_t>& truth,
                                                  const std::vector<std::int32_t>& pred, std::size_t classes) {
  std::vector<std::vector<std::uint64_t>> cm(classes, std::vector<std::uint64_t>(classes, 0));
  for (std::size_t p = 0; p < truth.size(); ++p) {
    if (truth[p] < 0 || static_cast<std::size_t>(truth[p]) >= classes) continue;
    ++cm[static_cast<std::size_t>(truth[p])][static_cast<std::size_t>(pred[p])];
  }
  return cm;
}

std::pair<std::vector<double>, double> miou(const std::vector<std::int32_t>& truth,
                                            const std::vector<std::int32_t>& pred, std::size_t classes) {
  std::vector<double> iou(classes, std::numeric_limits<double>::quiet_NaN());
  double sum = 0;
  int counted = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    const auto cls = static_cast<std::int32_t>(c);
    std::uint64_t tp = 0, fp = 0, fn = 0;
    for (std::size_t p = 0; p < truth.size(); ++p) {
      if (truth[p] < 0 || truth[p] >= static_cast<std::int32_t>(classes)) continue;
      if (truth[p] == cls && pred[p] == cls) ++tp;
      if (truth[p] != cls && pred[p] == cls) ++fp;
      if (truth[p] == cls && pred[p] != cls) ++fn;
    }
    if (tp + fp + fn == 0) continue;
    iou[c] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    sum += iou[c];
    ++counted;
  }
  return {iou, counted ? sum / counted : std::numeric_limits<double>::quiet_NaN()};
}

std::vector<double> conv2d(const std::vector<double>& x, const std::vector<double>& w, const std::vector<double>& b,
                           std::size_t batch, std::size_t cin, std::size_t h, std::size_t wd, std::size_t cout,
                           std::size_t k, std::size_t stride, std::size_t pad) {
  const auto oh = (h + 2 * pad - k) / stride + 1, ow = (wd + 2 * pad - k) / stride + 1;
  std::vector<double> y(batch * cout * oh * ow, 0.0);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = b.empty() ? 0.0 : b[o];
          for (std::size_t i = 0; i < cin; ++i)
            for (std::size_t ky = 0; ky < k; ++ky)
              for (std::size_t kx = 0; kx < k; ++kx) {
                const auto iy = static_cast<long>(oy * stride + ky) - static_cast<long>(pad);
                const auto ix = static_cast<long>(ox * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(wd)) continue;
                acc += x[((n * cin + i) * h + static_cast<std::size_t>(iy)) * wd + static_cast<std::size_t>(ix)] *
                       w[((o * cin + i) * k + ky) * k + kx];
              }
          y[((n * cout + o) * oh + oy) * ow + ox] = acc;
        }
  return y;
}

}  // namespace cdpcl::verify::oracle
