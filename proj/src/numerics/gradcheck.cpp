#include "cdpcl/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cdpcl/errors.hpp"

namespace cdpcl {

double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double eps) {
  if (!(eps > 0)) throw ContractError("finite_difference_check: eps must be positive");
  auto probe = x.detach();
  probe.set_requires_grad(true);
  const auto loss = f(probe);
  std::vector<double> analytic(x.numel(), 0.0);
  if (loss.on_graph()) {
    backward(loss);
    if (probe.has_grad()) {
      const auto g = probe.grad();
      analytic.assign(g.begin(), g.end());
    }
  }

  NoGradGuard no_grad;
  std::vector<double> base(x.values().begin(), x.values().end());
  double worst = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    auto shifted = base;
    shifted[i] = base[i] + eps;
    const double up = f(Tensor(x.shape(), shifted)).item();
    shifted[i] = base[i] - eps;
    const double down = f(Tensor(x.shape(), shifted)).item();
    const double numeric = (up - down) / (2.0 * eps);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

}  // namespace cdpcl
