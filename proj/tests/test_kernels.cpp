#include <doctest.h>

#include <cstdint>
#include <vector>

#include "cdpcl/kernels/conv2d.hpp"
#include "cdpcl/kernels/parallel.hpp"
#include "cdpcl/kernels/pooling.hpp"
#include "cdpcl/rng.hpp"
#include "cdpcl/verify/oracles.hpp"

using namespace cdpcl;

namespace {

std::vector<double> random_values(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

struct ThreadScope {
  int saved = kernels::thread_count();
  explicit ThreadScope(int n) { kernels::set_thread_count(n); }
  ~ThreadScope() { kernels::set_thread_count(saved); }
};

void check_close(const std::vector<double>& a, const std::vector<double>& b, double tol) {
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= tol * std::max(1.0, std::abs(b[i])));
}

}  // namespace

TEST_CASE("parallel conv matches the reference loop nest") {
  Rng rng(21);
  const kernels::ConvGeometry shapes[] = {
      {1, 1, 5, 5, 1, 1, 1, 0}, {2, 3, 8, 8, 4, 3, 1, 1}, {3, 2, 9, 7, 5, 3, 2, 1},
      {2, 4, 16, 16, 8, 3, 2, 1}, {1, 2, 6, 6, 3, 1, 1, 0}, {4, 3, 11, 13, 2, 5, 3, 2},
  };
  for (const auto& g : shapes) {
    REQUIRE(g.valid());
    auto x = random_values(g.input_size(), rng);
    auto w = random_values(g.weight_size(), rng);
    auto b = random_values(g.out_channels, rng);
    auto gy = random_values(g.output_size(), rng);

    std::vector<double> y(g.output_size()), y_ref(g.output_size());
    kernels::conv2d_forward(g, x, w, b, y);
    kernels::reference::conv2d_forward(g, x, w, b, y_ref);
    check_close(y, y_ref, 1e-12);
    auto y_oracle = verify::oracle::conv2d(x, w, b, g.batch, g.in_channels, g.in_h, g.in_w, g.out_channels, g.kernel,
                                           g.stride, g.pad);
    check_close(y_ref, y_oracle, 1e-12);

    std::vector<double> gx(x.size()), gw(w.size()), gb(b.size());
    std::vector<double> gx_ref(x.size()), gw_ref(w.size()), gb_ref(b.size());
    kernels::conv2d_backward(g, x, w, gy, gx, gw, gb);
    kernels::reference::conv2d_backward(g, x, w, gy, gx_ref, gw_ref, gb_ref);
    check_close(gx, gx_ref, 1e-12);
    check_close(gw, gw_ref, 1e-12);
    check_close(gb, gb_ref, 1e-12);
  }
}

TEST_CASE("conv results do not depend on the thread count") {
  Rng rng(22);
  kernels::ConvGeometry g{8, 3, 16, 16, 16, 3, 1, 1};
  auto x = random_values(g.input_size(), rng);
  auto w = random_values(g.weight_size(), rng);
  auto b = random_values(g.out_channels, rng);
  auto gy = random_values(g.output_size(), rng);

  auto run = [&](int threads) {
    ThreadScope scope(threads);
    std::vector<double> y(g.output_size()), gx(x.size()), gw(w.size()), gb(b.size());
    kernels::conv2d_forward(g, x, w, b, y);
    kernels::conv2d_backward(g, x, w, gy, gx, gw, gb);
    y.insert(y.end(), gx.begin(), gx.end());
    y.insert(y.end(), gw.begin(), gw.end());
    y.insert(y.end(), gb.begin(), gb.end());
    return y;
  };
  auto one = run(1);
  auto four = run(4);
  CHECK(one == four);
}

TEST_CASE("conv backward skips empty gradient spans") {
  kernels::ConvGeometry g{1, 1, 4, 4, 1, 3, 1, 1};
  std::vector<double> x(16, 1.0), w(9, 1.0), gy(16, 1.0), gw(9, 0.0);
  kernels::conv2d_backward(g, x, w, gy, {}, gw, {});
  CHECK(gw[4] == 16.0);
}

TEST_CASE("class sums and confusion match the serial versions") {
  Rng rng(23);
  std::uniform_int_distribution<int> lab(0, 5);
  for (int threads : {1, 3}) {
    ThreadScope scope(threads);
    std::size_t batch = 3, channels = 4, plane = 25, classes = 5;
    auto f = random_values(batch * channels * plane, rng);
    std::vector<std::int32_t> labels(batch * plane);
    for (auto& l : labels) {
      l = lab(rng);
      if (l == 5) l = 255;
    }
    std::vector<double> s(classes * channels), s_ref(classes * channels);
    std::vector<std::size_t> n(classes), n_ref(classes);
    kernels::class_sums(batch, channels, plane, classes, f, labels, s, n);
    kernels::reference::class_sums(batch, channels, plane, classes, f, labels, s_ref, n_ref);
    CHECK(n == n_ref);
    check_close(s, s_ref, 1e-13);

    std::vector<std::int32_t> pred(labels.size());
    for (auto& p : pred) p = lab(rng) % static_cast<int>(classes);
    std::vector<std::uint64_t> c(classes * classes), c_ref(classes * classes);
    kernels::confusion_accumulate(classes, labels, pred, c);
    kernels::reference::confusion_accumulate(classes, labels, pred, c_ref);
    CHECK(c == c_ref);
  }
}
