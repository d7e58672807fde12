#include "cdpcl/evalreport/evaluate.hpp"

#include <cmath>
#include <limits>

#include "cdpcl/errors.hpp"
#include "cdpcl/kernels/pooling.hpp"
#include "cdpcl/numerics/ops.hpp"
#include "cdpcl/protobank.hpp"

namespace cdpcl::evalreport {
namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

void check_dataset(const segtrain::Model& model, const synth::Dataset& data) {
  if (data.samples.empty()) throw DataError("dataset '" + data.meta.domain + "' has no samples");
  if (data.meta.classes != model.classes()) {
    throw ConfigError("dataset '" + data.meta.domain + "' has " + std::to_string(data.meta.classes) +
                      " classes, checkpoint has " + std::to_string(model.classes()));
  }
}

template <typename Fn>
void for_each_batch(const synth::Dataset& data, std::size_t batch, Fn&& fn) {
  for (std::size_t start = 0; start < data.samples.size(); start += batch) {
    std::vector<std::size_t> idx;
    for (std::size_t i = start; i < std::min(start + batch, data.samples.size()); ++i) idx.push_back(i);
    fn(segtrain::make_batch(data, idx));
  }
}

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0, na = 0, nb = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    dot += a[j] * b[j];
    na += a[j] * a[j];
    nb += b[j] * b[j];
  }
  const double d = std::sqrt(na) * std::sqrt(nb);
  return d > kGuardEpsilon ? dot / d : 0.0;
}

std::vector<double> normalized(std::span<const double> v) {
  double n = 0;
  for (auto x : v) n += x * x;
  n = std::max(std::sqrt(n), kGuardEpsilon);
  std::vector<double> out(v.begin(), v.end());
  for (auto& x : out) x /= n;
  return out;
}

}  // namespace

std::vector<std::int32_t> predict(const segtrain::SegNet& net, const Tensor& images) {
  NoGradGuard no_grad;
  const auto logits = net.forward(images).logits;
  const auto b = logits.dim(0), c = logits.dim(1), plane = logits.dim(2) * logits.dim(3);
  const auto v = logits.values();
  std::vector<std::int32_t> out(b * plane);
  for (std::size_t n = 0; n < b; ++n) {
    for (std::size_t p = 0; p < plane; ++p) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k) {
        if (v[(n * c + k) * plane + p] > v[(n * c + best) * plane + p]) best = k;
      }
      out[n * plane + p] = static_cast<std::int32_t>(best);
    }
  }
  return out;
}

DomainResult evaluate_domain(const segtrain::Model& model, const synth::Dataset& data, std::size_t batch) {
  check_dataset(model, data);
  DomainResult r{data.meta.domain, data.samples.size(), ConfusionMatrix(model.classes()), {}};
  for_each_batch(data, batch, [&](const segtrain::Batch& b) {
    validate_labels(b.labels, model.classes());
    r.confusion.add(b.labels.data, predict(model.net, b.images));
  });
  r.miou = miou(r.confusion);
  return r;
}

std::vector<DomainResult> evaluate(const std::filesystem::path& checkpoint,
                                   const std::vector<std::filesystem::path>& domain_dirs) {
  const auto model = segtrain::load_model(checkpoint);
  std::vector<synth::Dataset> data;
  for (const auto& d : domain_dirs) data.push_back(synth::read_dataset(d));
  std::vector<DomainResult> out;
  for (const auto& d : data) out.push_back(evaluate_domain(model, d));
  return out;
}

double DiscrepancyTables::diagonal_margin(bool augmented) const {
  const auto& m = augmented ? cos_aug : cos_src;
  double diag = 0, off = 0;
  std::size_t nd = 0, no = 0;
  for (std::size_t k = 0; k < classes; ++k) {
    for (std::size_t i = 0; i < classes; ++i) {
      const double v = m[k * classes + i];
      if (std::isnan(v)) continue;
      if (k == i) {
        diag += v;
        ++nd;
      } else {
        off += v;
        ++no;
      }
    }
  }
  if (nd == 0 || no == 0) return kNan;
  return diag / static_cast<double>(nd) - off / static_cast<double>(no);
}

DiscrepancyTables discrepancy_report(const segtrain::Model& model, const synth::Dataset& data, std::size_t batch) {
  check_dataset(model, data);
  const auto c = model.classes();
  const auto n = model.net.shape().feat_dim;
  std::vector<double> sums(c * n, 0.0);
  std::vector<std::size_t> counts(c, 0);
  for_each_batch(data, batch, [&](const segtrain::Batch& b) {
    validate_labels(b.labels, c);
    NoGradGuard no_grad;
    const auto z = model.net.encode(b.images);
    const auto small = protobank::downsample_labels(b.labels, z.dim(2), z.dim(3));
    std::vector<double> s(c * n);
    std::vector<std::size_t> k(c);
    kernels::class_sums(z.dim(0), n, z.dim(2) * z.dim(3), c, z.values(), small.data, s, k);
    for (std::size_t j = 0; j < s.size(); ++j) sums[j] += s[j];
    for (std::size_t j = 0; j < c; ++j) counts[j] += k[j];
  });

  DiscrepancyTables t;
  t.domain = data.meta.domain;
  t.classes = c;
  t.present.assign(c, false);
  t.src_init = model.bank_src.initialized();
  t.aug_init = model.bank_aug.initialized();
  t.l1_src.assign(c, kNan);
  t.l1_aug.assign(c, kNan);
  t.cos_src.assign(c * c, kNan);
  t.cos_aug.assign(c * c, kNan);

  std::vector<std::vector<double>> feat(c);
  for (std::size_t i = 0; i < c; ++i) {
    if (counts[i] == 0) continue;
    t.present[i] = true;
    std::vector<double> mean(n);
    for (std::size_t j = 0; j < n; ++j) mean[j] = sums[i * n + j] / static_cast<double>(counts[i]);
    feat[i] = normalized(mean);
  }
  const auto fill = [&](const protobank::PrototypeBank& bank, std::vector<double>& l1, std::vector<double>& cos) {
    for (std::size_t k = 0; k < c; ++k) {
      if (!bank.initialized()[k]) continue;
      const auto p = normalized(bank.row(k));
      if (t.present[k]) {
        double d = 0;
        for (std::size_t j = 0; j < n; ++j) d += std::abs(feat[k][j] - p[j]);
        l1[k] = d / static_cast<double>(n);
      }
      for (std::size_t i = 0; i < c; ++i) {
        if (t.present[i]) cos[k * c + i] = cosine(p, feat[i]);
      }
    }
  };
  fill(model.bank_src, t.l1_src, t.cos_src);
  fill(model.bank_aug, t.l1_aug, t.cos_aug);
  return t;
}

}  // namespace cdpcl::evalreport
