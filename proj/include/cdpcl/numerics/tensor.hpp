#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cdpcl {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor;

namespace detail {

struct TensorImpl;

/// Hands a backward closure the gradient buffers of its inputs. Inputs that
/// do not take part in differentiation map to nullptr.
class GradSink {
 public:
  explicit GradSink(const std::vector<std::shared_ptr<TensorImpl>>& inputs) : inputs_(inputs) {}
  double* operator[](std::size_t input) const;

 private:
  const std::vector<std::shared_ptr<TensorImpl>>& inputs_;
};

using BackwardFn = std::function<void(std::span<const double> grad_out, const GradSink& sink)>;

struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  BackwardFn backward;
};

struct TensorImpl {
  Shape shape;
  std::vector<double> values;
  bool requires_grad = false;
  bool has_grad = false;
  std::vector<double> grad;
  std::shared_ptr<Node> grad_fn;

  bool on_graph() const { return requires_grad || grad_fn != nullptr; }
  double* grad_buffer();
};

}  // namespace detail

/// Dense row-major float64 array with an optional reverse-mode gradient.
///
/// Copies are shallow: two Tensor handles may refer to the same storage.
/// Values are immutable after construction except through mutable_values(),
/// which is reserved for optimizer updates of leaf parameters.
class Tensor {
 public:
  Tensor();
  Tensor(Shape shape, std::vector<double> values, bool requires_grad = false);

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  std::span<double> mutable_values();
  double item() const;
  double operator[](std::size_t flat) const { return values()[flat]; }
  double at(std::size_t i, std::size_t j) const;

  bool requires_grad() const;
  Tensor& set_requires_grad(bool on);
  bool on_graph() const;

  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// Same values, no history, no gradient requirement. Values are copied.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }

 private:
  std::shared_ptr<detail::TensorImpl> impl_;
};

bool grad_enabled();

/// Disables graph recording on this thread for the guard's lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Builds the output of a differentiable operation. The node is recorded only
/// when grad mode is on and some input is on the graph.
Tensor make_result(std::string_view op, Shape shape, std::vector<double> values,
                   std::vector<Tensor> inputs, detail::BackwardFn backward);

/// Topologically ordered view of the operations reachable from a root tensor.
class ComputeGraph {
 public:
  static ComputeGraph trace(const Tensor& root);

  std::size_t size() const { return order_.size(); }
  std::vector<std::string> op_names() const;

 private:
  friend void backward(const Tensor& loss);
  std::vector<std::shared_ptr<detail::TensorImpl>> order_;
};

/// Accumulates d(loss)/d(t) into every requires_grad leaf t reachable from
/// loss, then releases the graph. Intermediate gradients are not retained.
void backward(const Tensor& loss);

}  // namespace cdpcl
