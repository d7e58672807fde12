#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

#include "cdpcl/errors.hpp"
#include "cdpcl/numerics/checkpoint.hpp"
#include "cdpcl/numerics/diagnostics.hpp"
#include "cdpcl/numerics/gradcheck.hpp"
#include "cdpcl/numerics/ops.hpp"
#include "cdpcl/rng.hpp"

using namespace cdpcl;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool grad = false) {
  std::uniform_real_distribution<double> d(lo, hi);
  std::vector<double> v(numel_of(shape));
  for (auto& x : v) x = d(rng);
  return Tensor(std::move(shape), std::move(v), grad);
}

void check_values(const Tensor& t, std::initializer_list<double> expected, double tol = 1e-15) {
  REQUIRE(t.numel() == expected.size());
  std::size_t i = 0;
  for (double e : expected) CHECK(t[i++] == doctest::Approx(e).epsilon(tol));
}

}  // namespace

TEST_CASE("tensor construction checks element count") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<double>(5)), DimensionError);
  Tensor t = Tensor::full({2, 2}, 1.5);
  CHECK(t.numel() == 4);
  CHECK(t.at(1, 1) == 1.5);
  CHECK(shape_string(t.shape()) == "[2,2]");
}

TEST_CASE("elementwise ops and broadcasting") {
  check_values(add(Tensor({2}, {1, 2}), Tensor({2}, {3, 4})), {4, 6});
  check_values(sub(Tensor({2}, {1, 2}), Tensor({2}, {3, 4})), {-2, -2});
  Tensor row({1, 3}, {1, 2, 3});
  Tensor col({2, 1}, {10, 20});
  Tensor s = add(row, col);
  CHECK(s.shape() == Shape{2, 3});
  check_values(s, {11, 12, 13, 21, 22, 23});
  CHECK_THROWS_AS(add(Tensor({2}, {1, 2}), Tensor({3}, {1, 2, 3})), DimensionError);
  try {
    mul(Tensor({2}, {1, 2}), Tensor({3}, {1, 2, 3}));
  } catch (const DimensionError& e) {
    std::string msg = e.what();
    CHECK(msg.find("mul") != std::string::npos);
    CHECK(msg.find("[3]") != std::string::npos);
  }
}

TEST_CASE("softmax and l2_normalize basics") {
  check_values(softmax(Tensor({2}, {0, 0}), 0), {0.5, 0.5});
  check_values(l2_normalize(Tensor({2}, {3, 4}), 0), {0.6, 0.8});
}

TEST_CASE("softmax rows sum to one and lie in (0,1)") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({4, 7}, rng, -10, 10);
    Tensor p = softmax(x, 1);
    for (std::size_t r = 0; r < 4; ++r) {
      double total = 0;
      for (std::size_t c = 0; c < 7; ++c) {
        double v = p.at(r, c);
        CHECK(v > 0.0);
        CHECK(v < 1.0);
        total += v;
      }
      CHECK(std::abs(total - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("l2_normalize gives unit rows") {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor x = random_tensor({3, 5}, rng, -4, 4);
    Tensor n = l2_normalize(x, 1);
    for (std::size_t r = 0; r < 3; ++r) {
      double sq = 0;
      for (std::size_t c = 0; c < 5; ++c) sq += n.at(r, c) * n.at(r, c);
      CHECK(std::abs(std::sqrt(sq) - 1.0) <= 1e-12);
    }
  }
}

TEST_CASE("logsumexp is stable for large inputs") {
  Tensor x({3}, {1000, 1000, 1000});
  CHECK(logsumexp(x, 0).item() == doctest::Approx(1000 + std::log(3.0)).epsilon(1e-15));
}

TEST_CASE("log and div clamp at the guard and count it") {
  diagnostics::reset();
  Tensor y = log(Tensor({1}, {0.0}));
  CHECK(std::isfinite(y.item()));
  CHECK(y.item() == doctest::Approx(std::log(kGuardEpsilon)));
  CHECK(diagnostics::count(diagnostics::Warning::NumericGuard) == 1);
  Tensor q = div(Tensor({1}, {1.0}), Tensor({1}, {0.0}));
  CHECK(std::isfinite(q.item()));
  CHECK(diagnostics::count(diagnostics::Warning::NumericGuard) == 2);
}

TEST_CASE("backward of sum(x*x)") {
  Tensor x({1}, {3}, true);
  backward(sum(mul(x, x)));
  REQUIRE(x.has_grad());
  CHECK(x.grad()[0] == 6.0);
}

TEST_CASE("backward of log softmax entry") {
  Tensor x({2}, {0, 0}, true);
  Tensor l = slice(log(softmax(x, 0)), 0, 0, 1);
  backward(sum(l));
  CHECK(x.grad()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(x.grad()[1] == doctest::Approx(-0.5).epsilon(1e-15));
}

TEST_CASE("inputs without requires_grad get no gradient") {
  Tensor x({2}, {1, 2}, true);
  Tensor c({2}, {3, 4});
  backward(sum(mul(x, c)));
  CHECK(x.has_grad());
  CHECK_FALSE(c.has_grad());
}

TEST_CASE("backward rejects non-scalar and off-graph losses") {
  Tensor x({2}, {1, 2}, true);
  CHECK_THROWS_AS(backward(mul(x, x)), ContractError);
  CHECK_THROWS_AS(backward(Tensor::scalar(1.0)), ContractError);
}

TEST_CASE("no-grad guard stops recording") {
  Tensor x({2}, {1, 2}, true);
  Tensor y;
  {
    NoGradGuard guard;
    CHECK_FALSE(grad_enabled());
    y = sum(mul(x, x));
  }
  CHECK(grad_enabled());
  CHECK_FALSE(y.on_graph());
}

TEST_CASE("compute graph is topologically ordered") {
  Tensor x({2}, {1, 2}, true);
  Tensor y = sum(exp(mul(x, x)));
  auto g = ComputeGraph::trace(y);
  auto ops = g.op_names();
  REQUIRE(ops.size() == 3);
  CHECK(ops[0] == "mul");
  CHECK(ops[1] == "exp");
  CHECK(ops[2] == "sum");
}

TEST_CASE("gradient is linear over summed graphs") {
  Rng rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor x = random_tensor({2, 3}, rng, -1, 1, true);
    auto f = [](const Tensor& t) { return sum(exp(mul_scalar(t, 0.5))); };
    auto g = [](const Tensor& t) { return sum(log_softmax(t, 1)); };
    backward(f(x));
    std::vector<double> gf(x.grad().begin(), x.grad().end());
    x.zero_grad();
    backward(g(x));
    std::vector<double> gg(x.grad().begin(), x.grad().end());
    x.zero_grad();
    backward(add(f(x), g(x)));
    for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x.grad()[i] == doctest::Approx(gf[i] + gg[i]).epsilon(1e-14));
  }
}

TEST_CASE("finite difference check on simple functions") {
  Tensor x({1}, {3});
  CHECK(finite_difference_check([](const Tensor& t) { return sum(mul(t, t)); }, x) <= 1e-8);
  CHECK(finite_difference_check([](const Tensor&) { return Tensor::scalar(2.0); }, x) == 0.0);
}

TEST_CASE("finite difference check on every differentiable op") {
  Rng rng(11);
  Tensor x = random_tensor({2, 3}, rng, 0.5, 1.5);
  Tensor w = random_tensor({3, 2}, rng);
  Tensor other = random_tensor({2, 3}, rng, 0.5, 1.5);
  std::vector<std::pair<const char*, std::function<Tensor(const Tensor&)>>> fns = {
      {"div", [&](const Tensor& t) { return sum(div(other, t)); }},
      {"abs", [&](const Tensor& t) { return sum(abs(sub(t, other))); }},
      {"log", [&](const Tensor& t) { return sum(log(t)); }},
      {"relu", [&](const Tensor& t) { return sum(mul(relu(add_scalar(t, -1.0)), other)); }},
      {"mean", [&](const Tensor& t) { return sum(mul(mean(t, 1, true), t)); }},
      {"matmul", [&](const Tensor& t) { return sum(exp(mul_scalar(matmul(t, w), 0.3))); }},
      {"transpose", [&](const Tensor& t) { return sum(mul(matmul(transpose(t), t), matmul(w, transpose(w)))); }},
      {"softmax", [&](const Tensor& t) { return sum(mul(softmax(t, 0), other)); }},
      {"logsumexp", [&](const Tensor& t) { return sum(logsumexp(t, 1)); }},
      {"l2_normalize", [&](const Tensor& t) { return sum(mul(l2_normalize(t, 1), other)); }},
      {"concat", [&](const Tensor& t) { return sum(mul(concat({t, other}, 0), concat({other, t}, 0))); }},
      {"index_select", [&](const Tensor& t) { return sum(mul(index_select(t, 1, {2, 0, 2}), other)); }},
      {"broadcast", [&](const Tensor& t) { return sum(mul(broadcast_to(slice(t, 0, 0, 1), {2, 3}), other)); }},
  };
  for (auto& [name, f] : fns) {
    INFO(name);
    CHECK(finite_difference_check(f, x) <= 1e-6);
  }
}

TEST_CASE("conv2d and upsample gradients") {
  Rng rng(12);
  Tensor x = random_tensor({2, 2, 5, 5}, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  Tensor probe = random_tensor({2, 3, 3, 3}, rng);
  Conv2dOptions opts{2, 1};
  CHECK(finite_difference_check([&](const Tensor& t) { return sum(mul(conv2d(t, w, b, opts), probe)); }, x) <= 1e-6);
  CHECK(finite_difference_check([&](const Tensor& t) { return sum(mul(conv2d(x, t, b, opts), probe)); }, w) <= 1e-6);
  CHECK(finite_difference_check([&](const Tensor& t) { return sum(mul(conv2d(x, w, t, opts), probe)); }, b) <= 1e-6);
  Tensor up_probe = random_tensor({2, 2, 10, 10}, rng);
  CHECK(finite_difference_check([&](const Tensor& t) { return sum(mul(upsample_nearest(t, 2), up_probe)); }, x) <= 1e-6);
}

TEST_CASE("conv2d rejects mismatched channels") {
  Tensor x = Tensor::zeros({1, 2, 4, 4});
  Tensor w = Tensor::zeros({1, 3, 3, 3});
  CHECK_THROWS_AS(conv2d(x, w, Tensor::zeros({1})), DimensionError);
}

TEST_CASE("checkpoint roundtrip is exact") {
  Rng rng(5);
  std::vector<NamedTensor> in = {{"a", random_tensor({2, 3}, rng)}, {"scalar", Tensor::scalar(-0.0)},
                                 {"big", random_tensor({4, 1, 2}, rng, -1e300, 1e300)}};
  std::stringstream ss;
  write_tensors(ss, in);
  std::string bytes = ss.str();
  CHECK(bytes.substr(0, 4) == "CDPT");
  auto out = read_tensors(ss);
  REQUIRE(out.size() == in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    CHECK(out[i].name == in[i].name);
    CHECK(out[i].tensor.shape() == in[i].tensor.shape());
    for (std::size_t j = 0; j < in[i].tensor.numel(); ++j) CHECK(out[i].tensor[j] == in[i].tensor[j]);
  }
  CHECK(find_tensor(out, "a").numel() == 6);
  CHECK_THROWS_AS(find_tensor(out, "missing"), DataError);
}

TEST_CASE("checkpoint rejects bad magic and truncation") {
  std::vector<NamedTensor> in = {{"w", Tensor::full({3}, 1.0)}};
  std::stringstream ss;
  write_tensors(ss, in);
  std::string bytes = ss.str();

  std::string bad = bytes;
  bad[0] = 'X';
  std::stringstream s1(bad);
  CHECK_THROWS_AS(read_tensors(s1, "bad.cdpt"), FormatError);

  std::stringstream s2(bytes.substr(0, bytes.size() - 3));
  try {
    read_tensors(s2, "short.cdpt");
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    std::string msg = e.what();
    CHECK(msg.find("short.cdpt") != std::string::npos);
    CHECK(msg.find("offset") != std::string::npos);
  }
}
