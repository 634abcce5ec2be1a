#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "brainseg/metrics.hpp"
#include "brainseg/tensor.hpp"

namespace brainseg::nn {

/// A trainable tensor and its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string name, Shape shape) : name(std::move(name)), value(shape), grad(shape) {}
};

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation
  bool requires_grad = false;
  std::function<void()> backward;

  Tensor& grad_buffer();
};

/// Handle to a value produced on a Tape.
class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  /// Gradient after Tape::backward; empty if never reached.
  const Tensor& grad() const { return node_->grad; }
  Node& node() const { return *node_; }
  const std::shared_ptr<Node>& ptr() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// One row of a model summary.
struct LayerInfo {
  std::string name;
  Shape output;
  std::size_t parameters = 0;
};

/// Reverse-mode recorder. With recording off the ops only compute values,
/// so intermediate tensors are freed as soon as they go out of scope.
class Tape {
 public:
  explicit Tape(bool recording = true) : recording_(recording) {}

  bool recording() const noexcept { return recording_; }

  Var constant(Tensor value);
  /// A leaf whose gradient is kept, e.g. for gradient checks.
  Var leaf(Tensor value);

  /// Seeds d(output)/d(output) = 1 for a single-element output and
  /// propagates in reverse creation order.
  void backward(const Var& output);

  void trace_into(std::vector<LayerInfo>* trace) { trace_ = trace; }
  void note(std::string name, const Var& output, std::size_t parameters = 0);

  Var record(Tensor value, bool requires_grad, std::function<void(Node& self)> backward);

 private:
  bool recording_;
  std::vector<std::shared_ptr<Node>> nodes_;
  std::vector<LayerInfo>* trace_ = nullptr;
};

// Ops. Shapes are NCHW; conv weights are (out, in, k, k), biases (1, out, 1, 1),
// transposed-conv weights (in, out, 2, 2).

Var conv2d(Tape& tape, const Var& x, Parameter& weight, Parameter& bias);
Var upconv2x2(Tape& tape, const Var& x, Parameter& weight, Parameter& bias);
Var relu(Tape& tape, const Var& x);
/// Logistic function, clamped so outputs stay strictly inside (0, 1) in float.
Var sigmoid(Tape& tape, const Var& x);
Var add(Tape& tape, const Var& a, const Var& b);
/// Channel-wise concatenation.
Var concat(Tape& tape, const std::vector<Var>& parts);
Var maxpool2x2(Tape& tape, const Var& x);
/// Nearest-neighbor upsampling by an integer factor.
Var upsample(Tape& tape, const Var& x, std::size_t factor);

/// Mean over the batch of the per-sample combined BCE + soft-Dice loss.
/// components, when given, receives the batch means of each term.
Var combined_loss(Tape& tape, const Var& prob, const Tensor& target, double smooth,
                  LossValue* components = nullptr);

}  // namespace brainseg::nn
