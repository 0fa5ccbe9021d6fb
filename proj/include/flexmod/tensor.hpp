// Reverse-mode autodiff over dense 64-bit float tensors. The op set is the
// minimum the simulator needs: affine layers, pointwise activations, column
// concatenation, softmax cross-entropy and a few scalar reductions.
#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace flexmod {

enum class Activation { relu, tanh, sigmoid, identity };

Activation activation_from_string(const std::string& name);
std::string to_string(Activation a);

struct TensorNode {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool backward_done = false;
  std::vector<std::shared_ptr<TensorNode>> parents;
  // Reads this node's grad and accumulates into the parents' grads. Cleared
  // after it runs, which is how re-running backward on a spent graph is
  // detected.
  std::function<void(TensorNode&)> backprop;
};

class Tensor {
 public:
  Tensor() = default;

  static Tensor from_values(std::vector<int> shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const std::vector<int>& shape() const { return node_->shape; }
  int dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::size_t size() const { return node_->values.size(); }

  std::vector<double>& values() { return node_->values; }
  const std::vector<double>& values() const { return node_->values; }
  double item() const;

  bool requires_grad() const { return node_->requires_grad; }
  // Gradient, allocated as zeros on first access.
  std::vector<double>& grad();
  bool has_grad() const { return !node_->grad.empty(); }
  void clear_grad() { node_->grad.clear(); }

  std::shared_ptr<TensorNode> node() const { return node_; }
  static Tensor wrap(std::shared_ptr<TensorNode> node);

 private:
  std::shared_ptr<TensorNode> node_;
};

// y[b, o] = sum_i x[b, i] * w[o, i] + bias[o]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);
Tensor activate(const Tensor& x, Activation act);
Tensor concat_cols(const std::vector<Tensor>& parts);
// mean over the batch of -log softmax(logits)[label]
Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& x);
Tensor square(const Tensor& x);
Tensor scale(const Tensor& x, double factor);
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// Backpropagates from a scalar loss through the recorded graph. Throws if the
// loss is not scalar or if this graph has already been consumed.
void backward(const Tensor& loss);

void zero_grad(const std::vector<Tensor>& tensors);

// Row-major softmax probabilities of a [batch x k] value array (no graph).
std::vector<double> softmax_rows(const std::vector<double>& logits, int batch, int k);

}  // namespace flexmod
