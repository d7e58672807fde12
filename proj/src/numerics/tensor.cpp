#include "cdpcl/numerics/tensor.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_set>

#include "cdpcl/errors.hpp"

namespace cdpcl {

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace detail {

double* TensorImpl::grad_buffer() {
  if (!has_grad) {
    grad.assign(values.size(), 0.0);
    has_grad = true;
  }
  return grad.data();
}

double* GradSink::operator[](std::size_t input) const {
  auto& impl = inputs_.at(input);
  return impl->on_graph() ? impl->grad_buffer() : nullptr;
}

}  // namespace detail

namespace {
thread_local bool g_grad_enabled = true;
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor::Tensor() : Tensor(Shape{0}, {}) {}

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad)
    : impl_(std::make_shared<detail::TensorImpl>()) {
  if (numel_of(shape) != values.size()) {
    throw DimensionError("tensor: shape " + shape_string(shape) + " holds " +
                         std::to_string(numel_of(shape)) + " values, got " +
                         std::to_string(values.size()));
  }
  impl_->shape = std::move(shape);
  impl_->values = std::move(values);
  impl_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const auto n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor(Shape{}, {value}, requires_grad); }

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= rank()) {
    throw DimensionError("tensor: axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string(shape()));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return impl_->values.size(); }

std::span<const double> Tensor::values() const { return impl_->values; }
std::span<double> Tensor::mutable_values() { return impl_->values; }

double Tensor::item() const {
  if (numel() != 1) throw ContractError("item: tensor of shape " + shape_string(shape()) + " is not scalar");
  return impl_->values[0];
}

double Tensor::at(std::size_t i, std::size_t j) const {
  if (rank() != 2) throw DimensionError("at: expected a matrix, got " + shape_string(shape()));
  return impl_->values[i * impl_->shape[1] + j];
}

bool Tensor::requires_grad() const { return impl_->on_graph(); }

Tensor& Tensor::set_requires_grad(bool on) {
  if (impl_->grad_fn) throw ContractError("set_requires_grad: only leaf tensors can be toggled");
  impl_->requires_grad = on;
  return *this;
}

bool Tensor::on_graph() const { return impl_->on_graph(); }

bool Tensor::has_grad() const { return impl_->has_grad; }

std::span<const double> Tensor::grad() const {
  if (!impl_->has_grad) throw ContractError("grad: tensor has no accumulated gradient");
  return impl_->grad;
}

void Tensor::zero_grad() {
  impl_->has_grad = false;
  impl_->grad.clear();
}

Tensor Tensor::detach() const { return Tensor(impl_->shape, impl_->values); }

Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, detail::BackwardFn backward) {
  Tensor out(std::move(shape), std::move(values));
  if (!grad_enabled()) return out;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor& t) { return t.on_graph(); });
  if (!any) return out;
  auto node = std::make_shared<detail::Node>();
  node->op = std::string(op);
  node->inputs.reserve(inputs.size());
  for (auto& t : inputs) node->inputs.push_back(t.impl());
  node->backward = std::move(backward);
  out.impl()->grad_fn = std::move(node);
  return out;
}

ComputeGraph ComputeGraph::trace(const Tensor& root) {
  ComputeGraph graph;
  std::unordered_set<const detail::TensorImpl*> visited;
  // Iterative post-order DFS; inputs are emitted before their consumers.
  std::vector<std::pair<std::shared_ptr<detail::TensorImpl>, std::size_t>> stack;
  if (root.impl()->grad_fn) stack.emplace_back(root.impl(), 0);
  visited.insert(root.impl().get());
  while (!stack.empty()) {
    auto& [impl, next] = stack.back();
    const auto& inputs = impl->grad_fn->inputs;
    if (next < inputs.size()) {
      auto child = inputs[next++];
      if (child->grad_fn && visited.insert(child.get()).second) stack.emplace_back(std::move(child), 0);
      continue;
    }
    graph.order_.push_back(impl);
    stack.pop_back();
  }
  return graph;
}

std::vector<std::string> ComputeGraph::op_names() const {
  std::vector<std::string> names;
  names.reserve(order_.size());
  for (const auto& impl : order_) names.push_back(impl->grad_fn->op);
  return names;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw ContractError("backward: loss must be scalar, got shape " + shape_string(loss.shape()));
  }
  if (!loss.on_graph()) throw ContractError("backward: loss is not on a compute graph");

  auto graph = ComputeGraph::trace(loss);
  loss.impl()->grad_buffer()[0] += 1.0;
  for (auto it = graph.order_.rbegin(); it != graph.order_.rend(); ++it) {
    auto& impl = **it;
    if (!impl.has_grad) continue;
    detail::GradSink sink(impl.grad_fn->inputs);
    impl.grad_fn->backward(impl.grad, sink);
  }
  for (auto& impl : graph.order_) {
    impl->grad_fn.reset();
    impl->has_grad = false;
    impl->grad.clear();
    impl->grad.shrink_to_fit();
  }
}

}  // namespace cdpcl
