#pragma once

#include <functional>

#include "cdpcl/numerics/tensor.hpp"

namespace cdpcl {

/// Max over elements of |analytic - central difference| / max(1, |analytic|)
/// for a scalar-valued f. f must be deterministic; it is called 2*numel(x)+1
/// times.
double finite_difference_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                               double eps = 1e-5);

}  // namespace cdpcl
