#include <doctest.h>

#include <cmath>

#include "cdpcl/errors.hpp"
#include "cdpcl/losses.hpp"
#include "cdpcl/numerics/diagnostics.hpp"
#include "cdpcl/numerics/gradcheck.hpp"
#include "cdpcl/numerics/ops.hpp"
#include "cdpcl/rng.hpp"
#include "cdpcl/verify/oracles.hpp"

using namespace cdpcl;
using namespace cdpcl::losses;
using protobank::ClassFeatures;
using protobank::Prototypes;

namespace {

Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double lo = -1, double hi = 1, bool grad = false) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(r * c);
  for (auto& x : v) x = d(rng);
  return Tensor({r, c}, v, grad);
}

verify::oracle::Matrix to_rows(const Tensor& t) {
  verify::oracle::Matrix m(t.dim(0), std::vector<double>(t.dim(1)));
  for (std::size_t i = 0; i < t.dim(0); ++i)
    for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
  return m;
}

LossConfig unit_tau() {
  LossConfig cfg;
  cfg.tau = cfg.tau_u = cfg.tau_h = 1.0;
  return cfg;
}

struct Instance {
  Prototypes protos;
  ClassFeatures cf;
  Tensor u;
  Tensor h;
};

Instance random_instance(std::size_t c, std::size_t n, Rng& rng) {
  Instance in;
  std::vector<bool> init(c), present(c);
  for (std::size_t i = 0; i < c; ++i) {
    init[i] = rng() % 5 != 0;
    present[i] = rng() % 5 != 0;
  }
  init[0] = present[0] = true;
  Tensor f = random_matrix(c, n, rng, -1, 1, true);
  in.protos = {random_matrix(c, n, rng), init};
  in.cf = {f, present};
  in.u = random_matrix(c, n, rng, 0.05, 0.95);
  in.h = random_matrix(c, c, rng, 1e-4, 2.0);
  return in;
}

}  // namespace

TEST_CASE("segmentation loss on uniform logits is ln C") {
  Tensor logits = Tensor::zeros({1, 4, 2, 2});
  LabelMap labels{1, 2, 2, {0, 1, 2, 3}};
  CHECK(seg_loss(logits, labels).item() == doctest::Approx(std::log(4.0)).epsilon(1e-15));
}

TEST_CASE("segmentation loss vanishes with a large correct margin") {
  LabelMap labels{1, 1, 2, {0, 1}};
  double prev = 1e9;
  for (double margin : {1.0, 10.0, 40.0}) {
    Tensor logits({1, 2, 1, 2}, {margin, 0, 0, margin});
    double l = seg_loss(logits, labels).item();
    CHECK(l < prev);
    prev = l;
  }
  CHECK(prev < 1e-15);
}

TEST_CASE("segmentation loss with everything ignored") {
  diagnostics::reset();
  Tensor logits = Tensor::zeros({1, 2, 1, 2}, true);
  Tensor l = seg_loss(logits, LabelMap{1, 1, 2, {255, 255}});
  CHECK(l.item() == 0.0);
  CHECK(diagnostics::count(diagnostics::Warning::AllPixelsIgnored) == 1);
}

TEST_CASE("segmentation loss matches the loop oracle") {
  Rng rng(51);
  std::uniform_real_distribution<double> d(-3, 3);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t b = 1 + rng() % 2, c = 2 + rng() % 3, h = 2, w = 2;
    std::vector<double> lv(b * c * h * w);
    for (auto& x : lv) x = d(rng);
    std::vector<std::int32_t> lab(b * h * w);
    for (auto& l : lab) l = rng() % 5 == 0 ? 255 : static_cast<std::int32_t>(rng() % c);
    double got = seg_loss(Tensor({b, c, h, w}, lv), LabelMap{b, h, w, lab}).item();
    double want = verify::oracle::seg_loss(lv, b, c, h, w, lab);
    CHECK(std::abs(got - want) <= 1e-12);
  }
}

TEST_CASE("pcl two-class example") {
  Prototypes p{Tensor({2, 2}, {1, 0, 0, 1}), {true, true}};
  ClassFeatures cf{Tensor({2, 2}, {1, 0, 0, 1}), {true, true}};
  double term = -std::log(std::exp(1.0) / (std::exp(1.0) + 1.0));
  CHECK(term == doctest::Approx(0.3133).epsilon(1e-4));
  CHECK(pcl_loss(p, cf, unit_tau()).item() == doctest::Approx(2 * term).epsilon(1e-14));
}

TEST_CASE("pcl with orthogonal prototypes is ln 2 per term") {
  Prototypes p{Tensor({2, 4}, {0, 0, 1, 0, 0, 0, 0, 1}), {true, true}};
  ClassFeatures cf{Tensor({2, 4}, {1, 0, 0, 0, 0, 1, 0, 0}), {true, true}};
  CHECK(pcl_loss(p, cf, unit_tau()).item() == doctest::Approx(2 * std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("pcl with a single anchor") {
  Prototypes p{Tensor({2, 2}, {1, 0, 0, 1}), {true, false}};
  ClassFeatures cf{Tensor({2, 2}, {0.3, 0.4, 0, 0}), {true, false}};
  CHECK(pcl_loss(p, cf, unit_tau()).item() == 0.0);

  diagnostics::reset();
  LossConfig literal = unit_tau();
  literal.include_positive_in_denominator = false;
  CHECK(pcl_loss(p, cf, literal).item() == 0.0);
  CHECK(diagnostics::count(diagnostics::Warning::SingletonActiveSet) == 1);
}

TEST_CASE("pcl with an empty active set") {
  diagnostics::reset();
  Prototypes p{Tensor({2, 2}, {1, 0, 0, 1}), {false, false}};
  ClassFeatures cf{Tensor({2, 2}, {1, 0, 0, 1}), {true, true}};
  CHECK(pcl_loss(p, cf, unit_tau()).item() == 0.0);
  CHECK(diagnostics::count(diagnostics::Warning::EmptyActiveSet) == 1);
}

TEST_CASE("uncertainty reductions") {
  Rng rng(52);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_instance(4, 3, rng);
    LossConfig cfg;
    cfg.tau = cfg.tau_u = 0.7;
    double pcl = pcl_loss(in.protos, in.cf, cfg).item();
    CHECK(upcl_loss(in.protos, Tensor::full({4, 3}, 1.0), in.cf, cfg).item() == pcl);
    CHECK(upcl_loss(in.protos, Tensor::full({4, 3}, 0.5), in.cf, cfg).item() == doctest::Approx(pcl).epsilon(1e-13));
  }
}

TEST_CASE("neutral hard weights reduce to pcl") {
  Rng rng(53);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_instance(5, 4, rng);
    LossConfig cfg;
    cfg.tau = cfg.tau_h = 0.6;
    CHECK(hpcl_loss(in.protos, Tensor::full({5, 5}, 1.0), in.cf, cfg).item() == pcl_loss(in.protos, in.cf, cfg).item());
  }
}

TEST_CASE("shrinking an off-diagonal hard weight increases the loss") {
  Rng rng(54);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_instance(3, 4, rng);
    in.protos.initialized = {true, true, true};
    in.cf.present = {true, true, true};
    Tensor h = Tensor::full({3, 3}, 0.7);
    double before = hpcl_loss(in.protos, h, in.cf, LossConfig{}).item();
    std::vector<double> hv(h.values().begin(), h.values().end());
    Tensor fn = l2_normalize(in.cf.features.detach(), 1), pn = l2_normalize(in.protos.rows, 1);
    double dot = 0;
    for (std::size_t j = 0; j < 4; ++j) dot += fn.at(0, j) * pn.at(1, j);
    hv[1] = 0.35;
    double after = hpcl_loss(in.protos, Tensor({3, 3}, hv), in.cf, LossConfig{}).item();
    // halving H[0][1] doubles that logit, so the sign of the dot product decides the direction
    if (dot > 0) CHECK(after > before);
    if (dot < 0) CHECK(after < before);
  }
}

TEST_CASE("losses are non-negative with the positive in the denominator") {
  Rng rng(55);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = random_instance(2 + rng() % 5, 2 + rng() % 6, rng);
    LossConfig cfg;
    CHECK(pcl_loss(in.protos, in.cf, cfg).item() >= 0.0);
    CHECK(upcl_loss(in.protos, in.u, in.cf, cfg).item() >= 0.0);
    CHECK(hpcl_loss(in.protos, in.h, in.cf, cfg).item() >= 0.0);
  }
}

TEST_CASE("losses are invariant to a joint class permutation") {
  Rng rng(56);
  const std::vector<std::size_t> perm = {2, 0, 3, 1};
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_instance(4, 3, rng);
    auto permute_rows = [&](const Tensor& t) {
      std::vector<double> v(t.numel());
      std::size_t cols = t.dim(1);
      for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < cols; ++j) v[perm[i] * cols + j] = t.at(i, j);
      return Tensor(t.shape(), v);
    };
    auto permute_flags = [&](const std::vector<bool>& f) {
      std::vector<bool> out(4);
      for (std::size_t i = 0; i < 4; ++i) out[perm[i]] = f[i];
      return out;
    };
    std::vector<double> hv(16);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t k = 0; k < 4; ++k) hv[perm[i] * 4 + perm[k]] = in.h.at(i, k);
    Prototypes pp{permute_rows(in.protos.rows), permute_flags(in.protos.initialized)};
    ClassFeatures pf{permute_rows(in.cf.features.detach()), permute_flags(in.cf.present)};
    LossConfig cfg;
    auto near = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
    CHECK(near(pcl_loss(pp, pf, cfg).item(), pcl_loss(in.protos, in.cf, cfg).item()));
    CHECK(near(upcl_loss(pp, permute_rows(in.u), pf, cfg).item(), upcl_loss(in.protos, in.u, in.cf, cfg).item()));
    CHECK(near(hpcl_loss(pp, Tensor({4, 4}, hv), pf, cfg).item(), hpcl_loss(in.protos, in.h, in.cf, cfg).item()));
  }
}

TEST_CASE("raw dot products are stable under joint scaling") {
  Rng rng(57);
  for (int trial = 0; trial < 10; ++trial) {
    auto in = random_instance(4, 3, rng);
    LossConfig cfg;
    cfg.normalize_features = false;
    LossConfig scaled = cfg;
    scaled.tau = scaled.tau_u = scaled.tau_h = cfg.tau * 1e3;
    Prototypes big{mul_scalar(in.protos.rows, 1e3), in.protos.initialized};
    double a = pcl_loss(in.protos, in.cf, cfg).item();
    double b = pcl_loss(big, in.cf, scaled).item();
    CHECK(std::abs(a - b) <= 1e-9);
    Prototypes huge{mul_scalar(in.protos.rows, 1e6), in.protos.initialized};
    CHECK(std::isfinite(pcl_loss(huge, in.cf, cfg).item()));
  }
}

TEST_CASE("contrastive losses match the loop oracles") {
  Rng rng(58);
  for (int trial = 0; trial < 30; ++trial) {
    auto in = random_instance(2 + rng() % 5, 2 + rng() % 7, rng);
    LossConfig cfg;
    cfg.include_positive_in_denominator = trial % 3 != 0;
    cfg.normalize_features = trial % 4 != 0;
    verify::oracle::ContrastOptions opt{cfg.tau, cfg.include_positive_in_denominator, cfg.normalize_features};
    auto p = to_rows(in.protos.rows), f = to_rows(in.cf.features.detach());
    auto rel = [](double a, double b) { return std::abs(a - b) <= 1e-10 * std::max(1.0, std::abs(b)); };
    CHECK(rel(pcl_loss(in.protos, in.cf, cfg).item(),
              verify::oracle::pcl(p, in.protos.initialized, f, in.cf.present, opt)));
    CHECK(rel(upcl_loss(in.protos, in.u, in.cf, cfg).item(),
              verify::oracle::upcl(p, to_rows(in.u), in.protos.initialized, f, in.cf.present, opt)));
    CHECK(rel(hpcl_loss(in.protos, in.h, in.cf, cfg).item(),
              verify::oracle::hpcl(p, to_rows(in.h), in.protos.initialized, f, in.cf.present, opt)));
  }
}

TEST_CASE("loss gradients pass the finite difference check") {
  Rng rng(59);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t c = std::vector<std::size_t>{2, 3, 6}[trial % 3], n = std::vector<std::size_t>{2, 4, 8}[trial % 3];
    auto in = random_instance(c, n, rng);
    Tensor x = in.cf.features.detach();
    LossConfig cfg;
    auto with = [&](const Tensor& t) { return ClassFeatures{t, in.cf.present}; };
    CHECK(finite_difference_check([&](const Tensor& t) { return pcl_loss(in.protos, with(t), cfg); }, x) <= 1e-4);
    CHECK(finite_difference_check([&](const Tensor& t) { return upcl_loss(in.protos, in.u, with(t), cfg); }, x) <=
          1e-4);
    CHECK(finite_difference_check([&](const Tensor& t) { return hpcl_loss(in.protos, in.h, with(t), cfg); }, x) <=
          1e-4);
  }
}

TEST_CASE("gradients never reach prototypes or calibration inputs") {
  Rng rng(60);
  auto in = random_instance(3, 4, rng);
  in.protos.rows.set_requires_grad(true);
  in.u.set_requires_grad(true);
  in.h.set_requires_grad(true);
  LossConfig cfg;
  backward(add(add(pcl_loss(in.protos, in.cf, cfg), upcl_loss(in.protos, in.u, in.cf, cfg)),
               hpcl_loss(in.protos, in.h, in.cf, cfg)));
  CHECK(in.cf.features.has_grad());
  CHECK_FALSE(in.protos.rows.has_grad());
  CHECK_FALSE(in.u.has_grad());
  CHECK_FALSE(in.h.has_grad());
}

TEST_CASE("total loss") {
  CHECK(total_loss(Tensor::scalar(1.0), Tensor::scalar(2.0), Tensor::scalar(3.0), LossConfig{}).item() ==
        doctest::Approx(1.23).epsilon(1e-15));
  CHECK(total_loss(Tensor::scalar(1.5), Tensor::scalar(2.0), 0.0, Tensor::scalar(3.0), 0.0).item() == 1.5);
  CHECK(total_loss(Tensor::scalar(1.5), std::nullopt, 0.1, std::nullopt, 0.01).item() == 1.5);
  CHECK_THROWS_AS(total_loss(Tensor::scalar(NAN), std::nullopt, 0.1, std::nullopt, 0.01), DivergenceError);
  CHECK_THROWS_AS(total_loss(Tensor::scalar(1.0), Tensor::scalar(INFINITY), Tensor::scalar(0.0), LossConfig{}),
                  DivergenceError);
}

TEST_CASE("loss config defaults and validation") {
  LossConfig cfg;
  CHECK(cfg.tau_u == 0.8);
  CHECK(cfg.tau_h == 0.8);
  CHECK(cfg.lambda1 == 0.1);
  CHECK(cfg.lambda2 == 0.01);
  CHECK(cfg.include_positive_in_denominator);
  CHECK(cfg.normalize_features);
  cfg.tau_h = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = LossConfig{};
  cfg.lambda1 = -1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("ablation names") {
  for (auto a : {Ablation::Baseline, Ablation::Pcl, Ablation::Upcl, Ablation::Hpcl, Ablation::Cdpcl})
    CHECK(parse_ablation(to_string(a)) == a);
  CHECK_THROWS_AS(parse_ablation("isw"), ConfigError);
  CHECK(uses_upcl(Ablation::Cdpcl));
  CHECK(uses_hpcl(Ablation::Cdpcl));
  CHECK_FALSE(uses_pcl(Ablation::Cdpcl));
  CHECK(uses_pcl(Ablation::Pcl));
}
