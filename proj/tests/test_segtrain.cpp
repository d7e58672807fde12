#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <filesystem>

#include "cdpcl/errors.hpp"
#include "cdpcl/evalreport/evaluate.hpp"
#include "cdpcl/numerics/ops.hpp"
#include "cdpcl/segtrain/config.hpp"
#include "cdpcl/segtrain/optimizer.hpp"
#include "cdpcl/segtrain/segnet.hpp"
#include "cdpcl/segtrain/trainer.hpp"
#include "cdpcl/synthdomains/dataset.hpp"
#include "test_util.hpp"

using namespace cdpcl;
using namespace cdpcl::segtrain;
namespace fs = std::filesystem;

namespace {

synth::Dataset memory_dataset(std::size_t count, std::size_t size, std::uint64_t seed) {
  auto style = synth::source_style(6);
  synth::SceneSpec spec{6, size, size};
  synth::Dataset d;
  d.samples = synth::generate_domain(style, spec, count, seed);
  d.meta = {style.id, 6, size, size, count, seed};
  return d;
}

TrainConfig small_config(const fs::path& data, const fs::path& out) {
  TrainConfig cfg;
  cfg.data_dir = data;
  cfg.out_dir = out;
  cfg.batch = 4;
  cfg.iters = 12;
  cfg.seed = 5;
  return cfg;
}

void write_small_split(const fs::path& root) {
  auto split = synth::SplitConfig::defaults(6);
  split.train_count = 16;
  split.eval_count = 4;
  split.scene.height = split.scene.width = 32;
  synth::make_split(split, root);
}

std::vector<double> flat(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

}  // namespace

TEST_CASE("segnet output shapes") {
  SegNet net(SegNetShape{}, 1);
  auto out = net.forward(Tensor::zeros({2, 3, 64, 64}));
  CHECK(out.features.shape() == Shape{2, 32, 16, 16});
  CHECK(out.logits.shape() == Shape{2, 6, 64, 64});
  CHECK_THROWS_AS(net.forward(Tensor::zeros({2, 3, 30, 30})), DimensionError);
  CHECK_THROWS_AS(net.forward(Tensor::zeros({2, 1, 32, 32})), DimensionError);
}

TEST_CASE("segnet is deterministic and init respects fan-in bounds") {
  SegNet a(SegNetShape{}, 9), b(SegNetShape{}, 9), c(SegNetShape{}, 10);
  auto x = images_to_tensor(std::vector<synth::Image>{synth::Image(32, 32, 0.3), synth::Image(32, 32, 0.8)});
  CHECK(flat(a.forward(x).logits) == flat(b.forward(x).logits));
  CHECK(flat(a.forward(x).logits) == flat(a.forward(x).logits));
  CHECK(flat(a.forward(x).logits) != flat(c.forward(x).logits));
  for (const auto& p : a.parameters()) {
    const auto& w = p.tensor;
    std::size_t fan_in = w.rank() == 4 ? w.dim(1) * w.dim(2) * w.dim(3) : 0;
    if (fan_in == 0) continue;
    double bound = std::sqrt(1.0 / static_cast<double>(fan_in));
    for (double v : w.values()) CHECK(std::abs(v) <= bound);
  }
}

TEST_CASE("zero head gives uniform predictions") {
  SegNet net(SegNetShape{}, 2);
  for (auto& p : net.parameters())
    if (p.name.rfind("head", 0) == 0)
      for (auto& v : p.tensor.mutable_values()) v = 0.0;
  auto x = images_to_tensor(std::vector<synth::Image>{synth::Image(32, 32, 0.4)});
  auto probs = softmax(net.forward(x).logits, 1);
  for (double v : probs.values()) CHECK(v == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("frozen forward matches the encoder and records nothing") {
  SegNet net(SegNetShape{}, 3);
  auto data = memory_dataset(2, 32, 1);
  auto batch = make_batch(data, {0, 1});
  auto before = flat(net.parameters()[0].tensor);
  auto z = net.frozen_forward(batch.images);
  auto z2 = net.frozen_forward(batch.images);
  CHECK_FALSE(z.on_graph());
  CHECK(flat(z) == flat(net.encode(batch.images)));
  CHECK(flat(z) == flat(z2));
  CHECK(flat(net.parameters()[0].tensor) == before);
}

TEST_CASE("poly learning rate") {
  CHECK(poly_lr(0, 100, 0.01) == 0.01);
  CHECK(poly_lr(100, 100, 0.01) == 0.0);
  CHECK(poly_lr(50, 100, 1.0) == doctest::Approx(std::pow(2.0, -0.9)).epsilon(1e-15));
  CHECK(poly_lr(50, 100, 1.0) == doctest::Approx(0.5359).epsilon(1e-4));
  CHECK_THROWS_AS(poly_lr(101, 100, 0.01), ContractError);
  CHECK_THROWS_AS(poly_lr(0, 0, 0.01), ContractError);
}

TEST_CASE("sgd momentum update") {
  std::vector<NamedTensor> params = {{"w", Tensor({2}, {1.0, 2.0}, true)}, {"u", Tensor({1}, {5.0}, true)}};
  SgdMomentum opt(params, 0.9);
  backward(sum(params[0].tensor));
  opt.step(0.1);
  CHECK(params[0].tensor[0] == doctest::Approx(0.9).epsilon(1e-15));
  CHECK(params[1].tensor[0] == 5.0);
  opt.step(0.1);  // same gradient again: v = 0.9 + 1
  CHECK(params[0].tensor[0] == doctest::Approx(0.9 - 0.19).epsilon(1e-15));
  auto state = opt.state();
  REQUIRE(state.size() == 2);
  CHECK(state[0].name == "momentum.w");
  CHECK(state[0].tensor[0] == doctest::Approx(1.9).epsilon(1e-15));
}

TEST_CASE("config parsing") {
  auto cfg = parse_config("# comment\nseed = 4\nablation = hpcl\niters=10\ntau_h = 0.5\n");
  CHECK(cfg.seed == 4);
  CHECK(cfg.ablation == losses::Ablation::Hpcl);
  CHECK(cfg.iters == 10);
  CHECK(cfg.loss.tau_h == 0.5);
  CHECK(cfg.m_p == 0.9);
  CHECK(cfg.base_lr == 1e-2);

  auto again = parse_config(cfg.to_text());
  CHECK(again.to_text() == cfg.to_text());

  try {
    parse_config("seed = 1\nbogus = 2\n", "run.cfg");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("run.cfg:2") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config("seed = 1\nseed = 2\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("seed = -1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("batch = many\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("no equals sign\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("m_p = 1.0\n").validate(), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/train.cfg"), ConfigError);
  set_config_value(cfg, "lambda1", "0");
  CHECK(cfg.loss.lambda1 == 0.0);
  CHECK_THROWS_AS(set_config_value(cfg, "nope", "1"), ConfigError);
}

TEST_CASE("batch sampler is a pure function of seed and iteration") {
  BatchSampler a(10, 4, 3), b(10, 4, 3);
  std::vector<std::size_t> seen;
  for (std::size_t t = 0; t < 5; ++t) {
    auto ia = a.indices(t);
    CHECK(ia == b.indices(t));
    CHECK(a.aug_seeds(t) == b.aug_seeds(t));
    seen.insert(seen.end(), ia.begin(), ia.end());
  }
  CHECK(a.indices(1) == BatchSampler(10, 4, 3).indices(1));
  // the first 10 draws form a permutation of the dataset
  std::vector<std::size_t> first(seen.begin(), seen.begin() + 10);
  std::sort(first.begin(), first.end());
  for (std::size_t i = 0; i < 10; ++i) CHECK(first[i] == i);
}

TEST_CASE("absent classes keep their prototypes through a step") {
  auto data = memory_dataset(4, 32, 2);
  TrainConfig cfg;
  cfg.batch = 2;
  cfg.iters = 10;
  TrainState st(cfg);
  auto batch = make_batch(data, {0, 1}, {1, 2});
  train_step(st, batch);
  auto rows = flat(st.bank_src.rows());
  auto aug_rows = flat(st.bank_aug.rows());

  // relabel the next batch so only class 0 (and ignore) appear
  auto b2 = make_batch(data, {2, 3}, {3, 4});
  for (auto& l : b2.labels.data)
    if (l != kIgnoreIndex) l = 0;
  train_step(st, b2);
  for (std::size_t c = 1; c < 6; ++c)
    for (std::size_t j = 0; j < cfg.feat_dim; ++j) {
      CHECK(st.bank_src.rows().at(c, j) == rows[c * cfg.feat_dim + j]);
      CHECK(st.bank_aug.rows().at(c, j) == aug_rows[c * cfg.feat_dim + j]);
    }
  CHECK(st.bank_src.rows().at(0, 0) != rows[0]);
}

TEST_CASE("zero contrastive weights reproduce the baseline trace") {
  auto data = memory_dataset(8, 32, 3);
  TrainConfig base;
  base.batch = 4;
  base.iters = 6;
  base.ablation = losses::Ablation::Baseline;
  TrainConfig zero = base;
  zero.ablation = losses::Ablation::Cdpcl;
  zero.loss.lambda1 = zero.loss.lambda2 = 0.0;
  TrainState a(base), b(zero);
  BatchSampler sampler(8, 4, base.seed);
  for (std::size_t t = 0; t < base.iters; ++t) {
    auto batch = make_batch(data, sampler.indices(t), sampler.aug_seeds(t));
    auto ra = train_step(a, batch);
    auto rb = train_step(b, batch);
    CHECK(ra.l_seg == rb.l_seg);
    CHECK(ra.l_total == rb.l_total);
  }
  for (std::size_t i = 0; i < a.net.parameters().size(); ++i)
    CHECK(flat(a.net.parameters()[i].tensor) == flat(b.net.parameters()[i].tensor));
}

TEST_CASE("augmented class features are constants") {
  auto data = memory_dataset(4, 32, 4);
  TrainConfig cfg;
  cfg.batch = 4;
  cfg.iters = 3;
  TrainState st(cfg);
  auto batch = make_batch(data, {0, 1, 2, 3}, {5, 6, 7, 8});
  train_step(st, batch);
  auto z = st.net.frozen_forward(batch.images);
  auto cf = protobank::pool_class_features(z, batch.labels, cfg.classes);
  CHECK_FALSE(cf.features.on_graph());
}

TEST_CASE("100 steps on one batch halve the total loss") {
  auto data = memory_dataset(8, 64, 5);
  TrainConfig cfg;
  cfg.iters = 100;
  TrainState st(cfg);
  std::vector<std::size_t> idx(8);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  auto batch = make_batch(data, idx, {1, 2, 3, 4, 5, 6, 7, 8});
  double first = 0, last = 0;
  for (std::size_t t = 0; t < cfg.iters; ++t) {
    auto r = train_step(st, batch);
    if (t == 0) first = r.l_total;
    last = r.l_total;
  }
  INFO("first " << first << " last " << last);
  CHECK(last <= 0.5 * first);
}

TEST_CASE("train writes outputs and is bit-reproducible") {
  test::TempDir dir("train");
  write_small_split(dir.path / "data");
  auto cfg = small_config(dir.path / "data", dir.path / "run_a");
  cfg.checkpoint_every = 6;
  auto res = train(cfg);
  CHECK(res.records.size() == cfg.iters);
  CHECK(fs::exists(dir.path / "run_a" / "train.cfg"));
  CHECK(fs::exists(dir.path / "run_a" / "checkpoint_000006.cdpt"));
  CHECK(fs::exists(dir.path / "run_a" / "checkpoint.cdpt"));
  auto log = test::read_file(res.log);
  CHECK(log.rfind(csv_header() + "\n", 0) == 0);
  CHECK(std::count(log.begin(), log.end(), '\n') == static_cast<long>(cfg.iters + 1));

  cfg.out_dir = dir.path / "run_b";
  train(cfg);
  CHECK(test::read_file(dir.path / "run_a" / "checkpoint.cdpt") ==
        test::read_file(dir.path / "run_b" / "checkpoint.cdpt"));
  CHECK(test::read_file(dir.path / "run_a" / "train_log.csv") == test::read_file(dir.path / "run_b" / "train_log.csv"));
  auto saved = load_config(dir.path / "run_a" / "train.cfg");
  CHECK(saved.seed == cfg.seed);
  CHECK(saved.iters == cfg.iters);
  CHECK(saved.ablation == cfg.ablation);
}

TEST_CASE("checkpoint restore resumes identically") {
  auto data = memory_dataset(8, 32, 6);
  TrainConfig cfg;
  cfg.batch = 4;
  cfg.iters = 6;
  BatchSampler sampler(8, 4, cfg.seed);
  auto batch_at = [&](std::size_t t) { return make_batch(data, sampler.indices(t), sampler.aug_seeds(t)); };

  TrainState full(cfg);
  for (std::size_t t = 0; t < 6; ++t) train_step(full, batch_at(t));

  TrainState first(cfg);
  for (std::size_t t = 0; t < 3; ++t) train_step(first, batch_at(t));
  TrainState resumed(cfg);
  resumed.restore(first.checkpoint());
  CHECK(resumed.iteration == 3);
  for (std::size_t t = 3; t < 6; ++t) train_step(resumed, batch_at(t));

  auto a = full.checkpoint(), b = resumed.checkpoint();
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].name == b[i].name);
    CHECK(flat(a[i].tensor) == flat(b[i].tensor));
  }
}

TEST_CASE("checkpoint reload gives identical evaluation") {
  test::TempDir dir("reload");
  auto data = memory_dataset(6, 32, 7);
  TrainConfig cfg;
  cfg.batch = 3;
  cfg.iters = 4;
  TrainState st(cfg);
  BatchSampler sampler(6, 3, 0);
  for (std::size_t t = 0; t < 4; ++t) train_step(st, make_batch(data, sampler.indices(t), sampler.aug_seeds(t)));
  save_checkpoint(dir.path / "m.cdpt", st.checkpoint());

  Model live{st.net, st.bank_src, st.bank_aug};
  Model loaded = load_model(dir.path / "m.cdpt");
  auto r1 = evalreport::evaluate_domain(live, data);
  auto r2 = evalreport::evaluate_domain(loaded, data);
  CHECK(std::vector<std::uint64_t>(r1.confusion.counts().begin(), r1.confusion.counts().end()) ==
        std::vector<std::uint64_t>(r2.confusion.counts().begin(), r2.confusion.counts().end()));
  CHECK(r1.miou.mean == r2.miou.mean);
}

TEST_CASE("train reports a missing dataset as a config error") {
  test::TempDir dir("missing");
  auto cfg = small_config(dir.path / "nowhere", dir.path / "run");
  CHECK_THROWS_AS(train(cfg), ConfigError);
  CHECK_FALSE(fs::exists(dir.path / "run" / "checkpoint.cdpt"));
}

TEST_CASE("divergence aborts with a state dump") {
  test::TempDir dir("diverge");
  write_small_split(dir.path / "data");
  auto cfg = small_config(dir.path / "data", dir.path / "run");
  cfg.base_lr = 1e12;
  cfg.iters = 30;
  CHECK_THROWS_AS(train(cfg), DivergenceError);
  CHECK(fs::exists(dir.path / "run" / "diverged.cdpt"));
}
